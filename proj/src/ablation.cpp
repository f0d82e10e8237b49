#include "cankd/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cankd/errors.hpp"
#include "cankd/trainer.hpp"

namespace cankd {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Arm {
  std::string name;
  void (*apply)(ExperimentConfig&, const std::string&);
};

void apply_mu(ExperimentConfig& cfg, const std::string& value) {
  cfg.distill.mu = std::stod(value);
}

void apply_affinity(ExperimentConfig& cfg, const std::string& value) {
  cfg.distill.affinity = affinity_from_string(value);
}

void apply_pool(ExperimentConfig& cfg, const std::string& value) {
  cfg.distill.pool_scale = std::stoi(value);
}

void apply_residual(ExperimentConfig& cfg, const std::string& value) {
  cfg.distill.residual = (value == "on");
}

struct SweepDef {
  std::string name;
  std::vector<std::string> values;
  void (*apply)(ExperimentConfig&, const std::string&);
};

std::vector<SweepDef> sweep_defs() {
  return {
      {"mu", {"2", "5", "8", "10"}, apply_mu},
      {"affinity", {"gaussian", "embedded_gaussian", "dot_product"}, apply_affinity},
      {"pool", {"2", "4", "8"}, apply_pool},
      {"residual", {"on", "off"}, apply_residual},
  };
}

const SweepDef& find_sweep(const std::string& name) {
  static const std::vector<SweepDef> defs = sweep_defs();
  for (const auto& d : defs)
    if (d.name == name) return d;
  throw ConfigInvalid("unknown ablation sweep: " + name +
                      " (expected mu, affinity, pool or residual)");
}

}  // namespace

std::vector<std::string> ablation_sweeps() {
  std::vector<std::string> names;
  for (const auto& d : sweep_defs()) names.push_back(d.name);
  return names;
}

AblationReport run_ablation(const ExperimentConfig& base, const std::string& sweep, int num_seeds,
                            const std::string& out_dir) {
  if (num_seeds < 1) throw ConfigInvalid("ablation needs at least one seed");
  const SweepDef& def = find_sweep(sweep);
  fs::create_directories(out_dir);

  // One teacher per seed, shared by every arm: the swept knobs only affect
  // the student side, so this matches per-arm pretraining bit for bit.
  std::vector<std::string> teacher_paths;
  for (int k = 0; k < num_seeds; ++k) {
    ExperimentConfig tcfg = base;
    tcfg.seed = base.seed + static_cast<std::uint64_t>(k);
    tcfg.teacher_ckpt.clear();
    std::string path =
        (fs::path(out_dir) / ("teacher_seed" + std::to_string(tcfg.seed) + ".ckpt")).string();
    prepare_teacher(tcfg, path);
    teacher_paths.push_back(path);
  }

  AblationReport report;
  report.sweep = def.name;
  double best_acc = -1.0;
  for (const auto& value : def.values) {
    AblationArm arm;
    arm.name = def.name + "=" + value;
    double acc_sum = 0.0;
    double iou_sum = 0.0;
    int ok_count = 0;
    for (int k = 0; k < num_seeds; ++k) {
      AblationRun run;
      run.seed = base.seed + static_cast<std::uint64_t>(k);
      ExperimentConfig cfg = base;
      cfg.seed = run.seed;
      cfg.teacher_ckpt = teacher_paths[static_cast<std::size_t>(k)];
      cfg.out_dir = (fs::path(out_dir) / def.name / (def.name + "_" + value) /
                     ("seed" + std::to_string(run.seed)))
                        .string();
      run.run_dir = cfg.out_dir;
      try {
        def.apply(cfg, value);
        RunResult r = run_experiment(cfg);
        run.ok = true;
        run.val_accuracy = r.final_val_accuracy;
        run.val_mean_iou = r.final_val_mean_iou;
        run.feat_loss = r.final_val_feat_loss;
        acc_sum += r.final_val_accuracy;
        iou_sum += r.final_val_mean_iou;
        ++ok_count;
      } catch (const std::exception& e) {
        run.ok = false;
        run.error = e.what();
      }
      arm.runs.push_back(std::move(run));
    }
    if (ok_count > 0) {
      arm.mean_accuracy = acc_sum / ok_count;
      arm.mean_iou = iou_sum / ok_count;
      if (ok_count == num_seeds && arm.mean_accuracy > best_acc) {
        best_acc = arm.mean_accuracy;
        report.best_arm = arm.name;
      }
    }
    report.arms.push_back(std::move(arm));
  }
  for (auto& arm : report.arms) arm.best = (arm.name == report.best_arm);

  write_ablation_report(report, out_dir);
  return report;
}

void write_ablation_report(const AblationReport& report, const std::string& out_dir) {
  fs::create_directories(out_dir);

  std::ofstream csv((fs::path(out_dir) / "report.csv").string(), std::ios::trunc);
  if (!csv) throw IoError("cannot open report.csv under " + out_dir);
  csv << "sweep,arm,seed,ok,val_accuracy,val_mean_iou,feat_loss,error\n";
  for (const auto& arm : report.arms) {
    for (const auto& run : arm.runs) {
      csv << report.sweep << "," << arm.name << "," << run.seed << ","
          << (run.ok ? "true" : "false") << "," << fmt(run.val_accuracy) << ","
          << fmt(run.val_mean_iou) << "," << fmt(run.feat_loss) << ",\"" << run.error << "\"\n";
    }
    csv << report.sweep << "," << arm.name << ",mean," << (arm.runs.empty() ? "false" : "true")
        << "," << fmt(arm.mean_accuracy) << "," << fmt(arm.mean_iou) << ",,"
        << (arm.best ? "\"best\"" : "\"\"") << "\n";
  }

  ordered_json j;
  j["sweep"] = report.sweep;
  j["best_arm"] = report.best_arm;
  j["arms"] = ordered_json::array();
  for (const auto& arm : report.arms) {
    ordered_json a;
    a["name"] = arm.name;
    a["mean_accuracy"] = arm.mean_accuracy;
    a["mean_iou"] = arm.mean_iou;
    a["best"] = arm.best;
    a["runs"] = ordered_json::array();
    for (const auto& run : arm.runs) {
      ordered_json rj;
      rj["seed"] = run.seed;
      rj["ok"] = run.ok;
      rj["val_accuracy"] = run.val_accuracy;
      rj["val_mean_iou"] = run.val_mean_iou;
      rj["feat_loss"] = run.feat_loss;
      rj["run_dir"] = run.run_dir;
      if (!run.error.empty()) rj["error"] = run.error;
      a["runs"].push_back(rj);
    }
    j["arms"].push_back(a);
  }
  std::ofstream js((fs::path(out_dir) / "report.json").string(), std::ios::trunc);
  if (!js) throw IoError("cannot open report.json under " + out_dir);
  js << j.dump(2) << "\n";
}

}  // namespace cankd
