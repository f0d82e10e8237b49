#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "cankd/ablation.hpp"
#include "cankd/config.hpp"
#include "cankd/errors.hpp"
#include "cankd/trainer.hpp"

namespace {

bool parse_on_off(const std::string& s, bool* out) {
  if (s == "on" || s == "true" || s == "1") {
    *out = true;
    return true;
  }
  if (s == "off" || s == "false" || s == "0") {
    *out = false;
    return true;
  }
  return false;
}

int run_main(CLI::App& cmd, const std::string& config_path, double mu,
             const std::string& affinity, int pool_scale, const std::string& residual,
             std::uint64_t seed, int epochs, const std::string& out_dir,
             const std::string& teacher_ckpt) {
  cankd::ExperimentConfig cfg =
      config_path.empty() ? cankd::default_config() : cankd::load_config(config_path);
  if (cmd.count("--mu")) cfg.distill.mu = mu;
  if (cmd.count("--affinity")) cfg.distill.affinity = cankd::affinity_from_string(affinity);
  if (cmd.count("--pool-scale")) cfg.distill.pool_scale = pool_scale;
  if (cmd.count("--residual")) {
    bool value = true;
    if (!parse_on_off(residual, &value))
      throw cankd::ConfigInvalid("--residual expects on or off, got: " + residual);
    cfg.distill.residual = value;
  }
  if (cmd.count("--seed")) cfg.seed = seed;
  if (cmd.count("--epochs")) cfg.epochs = epochs;
  if (cmd.count("--out-dir")) cfg.out_dir = out_dir;
  if (cmd.count("--teacher-ckpt")) cfg.teacher_ckpt = teacher_ckpt;

  cankd::RunResult result = cankd::run_experiment(cfg);
  std::printf("run complete: %s\n", result.run_dir.c_str());
  std::printf("  teacher val accuracy %.4f\n", result.teacher_val_accuracy);
  std::printf("  final   val accuracy %.4f  mean_iou %.4f\n", result.final_val_accuracy,
              result.final_val_mean_iou);
  return 0;
}

int ablation_main(const std::string& config_path, const std::string& sweep, int seeds,
                  const std::string& out_dir) {
  cankd::ExperimentConfig cfg =
      config_path.empty() ? cankd::default_config() : cankd::load_config(config_path);
  cankd::AblationReport report = cankd::run_ablation(cfg, sweep, seeds, out_dir);
  std::printf("ablation %s complete, reports in %s\n", report.sweep.c_str(), out_dir.c_str());
  for (const auto& arm : report.arms) {
    std::printf("  %-28s mean val accuracy %.4f%s\n", arm.name.c_str(), arm.mean_accuracy,
                arm.best ? "  <- best" : "");
    for (const auto& run : arm.runs) {
      if (!run.ok) std::printf("    seed %llu failed: %s\n",
                               static_cast<unsigned long long>(run.seed), run.error.c_str());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-attention non-local distillation harness"};
  app.require_subcommand(1);

  std::string config_path;
  double mu = 5.0;
  std::string affinity = "dot_product";
  int pool_scale = 1;
  std::string residual = "on";
  std::uint64_t seed = 1;
  int epochs = 24;
  std::string out_dir;
  std::string teacher_ckpt;

  CLI::App* run = app.add_subcommand("run", "Train a student (optionally distilled) end to end");
  run->add_option("--config", config_path, "Experiment config JSON (defaults when omitted)");
  run->add_option("--mu", mu, "Feature-loss weight");
  run->add_option("--affinity", affinity, "dot_product, gaussian or embedded_gaussian");
  run->add_option("--pool-scale", pool_scale, "Teacher-side pooling factor (1/2/4/8)");
  run->add_option("--residual", residual, "Residual connection in the Can block (on/off)");
  run->add_option("--seed", seed, "Root seed");
  run->add_option("--epochs", epochs, "Student training epochs");
  run->add_option("--out-dir", out_dir, "Run output directory");
  run->add_option("--teacher-ckpt", teacher_ckpt, "Existing teacher checkpoint to load");

  std::string sweep;
  int num_seeds = 3;
  std::string ablation_dir = "runs/ablation";
  CLI::App* ablation =
      app.add_subcommand("ablation", "Run a preset sweep (mu, affinity, pool, residual)");
  ablation->add_option("--config", config_path, "Base config JSON (defaults when omitted)");
  ablation->add_option("--sweep", sweep, "Sweep name: mu, affinity, pool or residual")
      ->required();
  ablation->add_option("--seeds", num_seeds, "Number of consecutive seeds per arm");
  ablation->add_option("--out-dir", ablation_dir, "Sweep output directory");

  std::string init_path = "config.json";
  CLI::App* init = app.add_subcommand("init-config", "Write the default config as JSON");
  init->add_option("path", init_path, "Where to write the config");

  try {
    app.parse(argc, argv);
    if (run->parsed())
      return run_main(*run, config_path, mu, affinity, pool_scale, residual, seed, epochs,
                      out_dir, teacher_ckpt);
    if (ablation->parsed()) return ablation_main(config_path, sweep, num_seeds, ablation_dir);
    if (init->parsed()) {
      cankd::save_config(cankd::default_config(), init_path);
      std::printf("wrote %s\n", init_path.c_str());
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const cankd::ConfigInvalid& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const cankd::SpatialMismatch& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const cankd::InvalidScale& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const cankd::GaussianChannelMismatch& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const cankd::ShapeMismatch& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const cankd::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const cankd::CheckpointMissing& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const cankd::FormatError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const cankd::VersionMismatch& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const cankd::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
