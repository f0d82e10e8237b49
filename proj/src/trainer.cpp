#include "cankd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cankd/can_block.hpp"
#include "cankd/checkpoint.hpp"
#include "cankd/distillation.hpp"
#include "cankd/errors.hpp"
#include "cankd/optim.hpp"
#include "cankd/synthetic.hpp"
#include "cankd/tape.hpp"
#include "cankd/toy_models.hpp"

namespace cankd {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

// Wall timing goes to run.log only; the metrics files must be byte-identical
// across reruns of the same config.
class RunLog {
 public:
  explicit RunLog(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot open log file: " + path);
    start_ = now_seconds();
  }

  void line(const std::string& msg) {
    char stamp[32];
    std::snprintf(stamp, sizeof(stamp), "[%9.3fs] ", now_seconds() - start_);
    out_ << stamp << msg << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
  double start_ = 0.0;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Dataset {
  std::vector<SyntheticSample> samples;
};

Dataset make_dataset(const Rng& stream, int n, const DatasetConfig& d) {
  Dataset ds;
  ds.samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ds.samples.push_back(generate_sample(stream.derive(static_cast<std::uint64_t>(i)), d.height,
                                         d.width, d.num_classes));
  }
  return ds;
}

std::vector<DiffTensor> net_leaves(const ToyNetVars& v) {
  std::vector<DiffTensor> out;
  for (std::size_t i = 0; i < v.conv_w.size(); ++i) {
    out.push_back(v.conv_w[i]);
    out.push_back(v.conv_b[i]);
  }
  out.push_back(v.head_w);
  out.push_back(v.head_b);
  return out;
}

// One distilled tap: optional channel projection up to the teacher width,
// then a Can block operating at the teacher width.
struct LevelBank {
  int level = 0;
  std::size_t tap_pos_s = 0;
  std::size_t tap_pos_t = 0;
  bool needs_align = false;
  ChannelAligner aligner;
  CanBlockParams can;
};

struct StagedBank {
  DiffTensor align_w;
  CanBlockVars can;
};

std::size_t tap_position(const std::vector<int>& tap_levels, int level) {
  auto it = std::find(tap_levels.begin(), tap_levels.end(), level);
  if (it == tap_levels.end())
    throw ConfigInvalid("distill level " + std::to_string(level) + " is not a tap level");
  return static_cast<std::size_t>(it - tap_levels.begin());
}

std::vector<LevelBank> make_banks(const ExperimentConfig& cfg, Rng can_rng) {
  std::vector<LevelBank> banks;
  for (int level : cfg.distill.distill_levels) {
    LevelBank b;
    b.level = level;
    b.tap_pos_s = tap_position(cfg.student.tap_levels, level);
    b.tap_pos_t = tap_position(cfg.teacher.tap_levels, level);
    int c_s = cfg.student.widths[static_cast<std::size_t>(level)];
    int c_t = cfg.teacher.widths[static_cast<std::size_t>(level)];
    Rng level_rng = can_rng.split(static_cast<std::uint64_t>(level));
    b.needs_align = (c_s != c_t);
    if (b.needs_align) {
      Rng r = level_rng.split("align");
      b.aligner = init_aligner(c_s, c_t, r);
    }
    Rng r = level_rng.split("can");
    b.can = init_can_params(c_t, cfg.distill.affinity, cfg.distill.pool_scale,
                            cfg.distill.residual, cfg.distill.embed_dim, r);
    banks.push_back(std::move(b));
  }
  return banks;
}

ParamRefs bank_refs(std::vector<LevelBank>& banks) {
  ParamRefs refs;
  for (auto& b : banks) {
    std::string prefix = "distill.level" + std::to_string(b.level);
    if (b.needs_align) refs.push_back({prefix + ".align.w", &b.aligner.w_align});
    ParamRefs can = param_refs(b.can, prefix + ".can");
    refs.insert(refs.end(), can.begin(), can.end());
  }
  return refs;
}

std::vector<StagedBank> stage_banks(Tape& tape, const std::vector<LevelBank>& banks,
                                    bool trainable) {
  std::vector<StagedBank> out;
  out.reserve(banks.size());
  for (const auto& b : banks) {
    StagedBank s;
    if (b.needs_align) s.align_w = tape.leaf(b.aligner.w_align, trainable);
    s.can = stage(tape, b.can, trainable);
    out.push_back(s);
  }
  return out;
}

// Leaf order must mirror bank_refs / param_refs for grad accumulation.
void append_bank_leaves(const std::vector<LevelBank>& banks, const std::vector<StagedBank>& staged,
                        std::vector<DiffTensor>& leaves) {
  for (std::size_t i = 0; i < banks.size(); ++i) {
    if (banks[i].needs_align) leaves.push_back(staged[i].align_w);
    if (banks[i].can.has_embeddings()) {
      leaves.push_back(staged[i].can.w_theta);
      leaves.push_back(staged[i].can.w_phi);
    }
    leaves.push_back(staged[i].can.w_g);
    leaves.push_back(staged[i].can.w_z);
  }
}

// Builds the distillation terms for one sample given cached teacher maps.
std::vector<std::pair<DiffTensor, DiffTensor>> build_feats(
    Tape& tape, const std::vector<LevelBank>& banks, const std::vector<StagedBank>& staged,
    const ForwardResult& out, const std::vector<Tensor>& teacher_taps) {
  std::vector<std::pair<DiffTensor, DiffTensor>> feats;
  feats.reserve(banks.size());
  for (std::size_t i = 0; i < banks.size(); ++i) {
    DiffTensor f_t = tape.constant(teacher_taps[i]);
    DiffTensor f_s = out.taps[banks[i].tap_pos_s];
    if (banks[i].needs_align) f_s = align_channels(f_s, staged[i].align_w);
    DiffTensor f_star = can_block(f_s, f_t, staged[i].can);
    feats.push_back({f_t, f_star});
  }
  return feats;
}

void check_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw NumericError("non-finite loss in " + where);
}

struct SplitStats {
  double task_loss = 0.0;
  double feat_loss = 0.0;
  double total_loss = 0.0;
  double pixel_accuracy = 0.0;
  double mean_iou = 0.0;

  void add_metrics(const Tensor& logits, const LabelMap& labels, int num_classes) {
    PixelMetrics pm = eval_metrics(logits, labels, num_classes);
    pixel_accuracy += pm.pixel_accuracy;
    mean_iou += pm.mean_iou;
  }

  void finish(std::size_t n) {
    double inv = 1.0 / static_cast<double>(n);
    task_loss *= inv;
    feat_loss *= inv;
    total_loss *= inv;
    pixel_accuracy *= inv;
    mean_iou *= inv;
  }
};

Tensor logits_tensor(const ForwardResult& out) {
  return Tensor{out.logits.shape(), out.logits.values()};
}

// Forward-only pass over a split with the current parameters.
SplitStats eval_split(const ToyNet& net, const std::vector<LevelBank>& banks,
                      const DistillConfig& dcfg, bool do_distill, const Dataset& ds,
                      const std::vector<std::vector<Tensor>>& teacher_taps,
                      const std::string& where) {
  SplitStats st;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& sample = ds.samples[i];
    Tape tape;
    ToyNetVars vars = stage(tape, net, false);
    std::vector<StagedBank> staged = stage_banks(tape, banks, false);
    ForwardResult out = forward(vars, net.spec, tape.constant(sample.image));
    DiffTensor task = task_loss(out.logits, sample.label_map);
    std::vector<std::pair<DiffTensor, DiffTensor>> feats;
    if (do_distill) feats = build_feats(tape, banks, staged, out, teacher_taps[i]);
    auto [total, bd] = total_loss(task, feats, dcfg);
    (void)total;
    check_finite(bd.total, where);
    st.task_loss += bd.task_loss;
    st.feat_loss += bd.feat_loss_total;
    st.total_loss += bd.total;
    st.add_metrics(logits_tensor(out), sample.label_map, net.spec.num_classes);
  }
  st.finish(ds.samples.size());
  return st;
}

// Plain task-loss training used for the teacher.
void train_task_only(ToyNet& net, const Dataset& train, const OptimizerConfig& ocfg, int epochs,
                     int batch_size, Rng shuffle_rng, RunLog* log, const std::string& tag) {
  ParamRefs refs = param_refs(net, tag);
  SgdOptimizer opt(ocfg);
  std::vector<std::size_t> order(train.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
      std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      std::vector<Tensor> grad_sum;
      for (std::size_t k = start; k < stop; ++k) {
        const auto& sample = train.samples[order[k]];
        Tape tape;
        ToyNetVars vars = stage(tape, net, true);
        ForwardResult out = forward(vars, net.spec, tape.constant(sample.image));
        DiffTensor loss = task_loss(out.logits, sample.label_map);
        check_finite(loss.values()[0], tag + " epoch " + std::to_string(epoch));
        epoch_loss += loss.values()[0];
        tape.backward(loss);
        std::vector<DiffTensor> leaves = net_leaves(vars);
        if (grad_sum.empty()) {
          for (auto& leaf : leaves) grad_sum.push_back(tape.grad_tensor(leaf));
        } else {
          for (std::size_t p = 0; p < leaves.size(); ++p) {
            Tensor g = tape.grad_tensor(leaves[p]);
            for (std::size_t e = 0; e < g.values.size(); ++e) grad_sum[p].values[e] += g.values[e];
          }
        }
      }
      double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grad_sum)
        for (auto& v : g.values) v *= inv;
      opt.step(refs, grad_sum);
    }
    opt.on_epoch_end(epoch);
    if (log && (epoch % 5 == 0 || epoch == epochs)) {
      log->line(tag + " epoch " + std::to_string(epoch) + "/" + std::to_string(epochs) +
                " task_loss=" + fmt(epoch_loss / static_cast<double>(train.samples.size())));
    }
  }
}

// Teacher tap maps at the distill levels, fixed for the whole student run.
std::vector<std::vector<Tensor>> cache_teacher_taps(const ToyNet& teacher, const Dataset& ds,
                                                    const std::vector<LevelBank>& banks) {
  std::vector<std::vector<Tensor>> cache;
  cache.reserve(ds.samples.size());
  for (const auto& sample : ds.samples) {
    Tape tape;
    ToyNetVars vars = stage(tape, teacher, false);
    ForwardResult out = forward(vars, teacher.spec, tape.constant(sample.image));
    std::vector<Tensor> taps;
    taps.reserve(banks.size());
    for (const auto& b : banks) {
      const DiffTensor& t = out.taps[b.tap_pos_t];
      taps.push_back(Tensor{t.shape(), t.values()});
    }
    cache.push_back(std::move(taps));
  }
  return cache;
}

PixelMetrics eval_task_metrics(const ToyNet& net, const Dataset& ds) {
  PixelMetrics acc;
  for (const auto& sample : ds.samples) {
    Tape tape;
    ToyNetVars vars = stage(tape, net, false);
    ForwardResult out = forward(vars, net.spec, tape.constant(sample.image));
    PixelMetrics pm = eval_metrics(logits_tensor(out), sample.label_map, net.spec.num_classes);
    acc.pixel_accuracy += pm.pixel_accuracy;
    acc.mean_iou += pm.mean_iou;
  }
  acc.pixel_accuracy /= static_cast<double>(ds.samples.size());
  acc.mean_iou /= static_cast<double>(ds.samples.size());
  return acc;
}

ToyNetSpec spec_of(const NetConfig& net, const DatasetConfig& data) {
  ToyNetSpec spec;
  spec.widths = net.widths;
  spec.tap_levels = net.tap_levels;
  spec.num_classes = data.num_classes;
  spec.in_channels = 3;
  return spec;
}

ordered_json row_json(const MetricsRow& r) {
  ordered_json j;
  j["epoch"] = r.epoch;
  j["split"] = r.split;
  j["task_loss"] = r.task_loss;
  j["feat_loss"] = r.feat_loss;
  j["total_loss"] = r.total_loss;
  j["pixel_accuracy"] = r.pixel_accuracy;
  j["mean_iou"] = r.mean_iou;
  j["learning_rate"] = r.learning_rate;
  return j;
}

std::string row_csv(const MetricsRow& r) {
  return std::to_string(r.epoch) + "," + r.split + "," + fmt(r.task_loss) + "," +
         fmt(r.feat_loss) + "," + fmt(r.total_loss) + "," + fmt(r.pixel_accuracy) + "," +
         fmt(r.mean_iou) + "," + fmt(r.learning_rate);
}

ToyNet acquire_teacher(const ExperimentConfig& cfg, const Dataset& train, const Dataset& val,
                       RunLog& log, double* teacher_val_acc) {
  Rng init_rng = Rng(cfg.seed).split("teacher_init");
  ToyNet teacher = init_toy_net(spec_of(cfg.teacher, cfg.dataset), init_rng);
  ParamRefs refs = param_refs(teacher, "teacher");
  if (!cfg.teacher_ckpt.empty()) {
    if (!fs::exists(cfg.teacher_ckpt))
      throw CheckpointMissing("teacher checkpoint not found: " + cfg.teacher_ckpt);
    load_checkpoint_into(cfg.teacher_ckpt, refs);
    log.line("teacher loaded from " + cfg.teacher_ckpt);
  } else {
    log.line("pretraining teacher for " + std::to_string(cfg.teacher_epochs) + " epochs");
    train_task_only(teacher, train, cfg.optimizer, cfg.teacher_epochs, cfg.batch_size,
                    Rng(cfg.seed).split("teacher_shuffle"), &log, "teacher");
    std::string path = (fs::path(cfg.out_dir) / "teacher.ckpt").string();
    save_checkpoint(refs, path);
    log.line("teacher saved to " + path);
  }
  PixelMetrics pm = eval_task_metrics(teacher, val);
  *teacher_val_acc = pm.pixel_accuracy;
  log.line("teacher val pixel_accuracy=" + fmt(pm.pixel_accuracy) +
           " mean_iou=" + fmt(pm.mean_iou));
  return teacher;
}

}  // namespace

double prepare_teacher(const ExperimentConfig& cfg, const std::string& path) {
  validate(cfg);
  if (fs::exists(path)) return std::numeric_limits<double>::quiet_NaN();
  fs::create_directories(fs::path(path).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(path).parent_path());
  Rng root(cfg.seed);
  Dataset train = make_dataset(root.split("data_train"), cfg.dataset.train_size, cfg.dataset);
  Dataset val = make_dataset(root.split("data_val"), cfg.dataset.val_size, cfg.dataset);
  Rng init_rng = root.split("teacher_init");
  ToyNet teacher = init_toy_net(spec_of(cfg.teacher, cfg.dataset), init_rng);
  train_task_only(teacher, train, cfg.optimizer, cfg.teacher_epochs, cfg.batch_size,
                  root.split("teacher_shuffle"), nullptr, "teacher");
  ParamRefs refs = param_refs(teacher, "teacher");
  save_checkpoint(refs, path);
  return eval_task_metrics(teacher, val).pixel_accuracy;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  fs::create_directories(cfg.out_dir);
  RunLog log((fs::path(cfg.out_dir) / "run.log").string());
  save_config(cfg, (fs::path(cfg.out_dir) / "config.json").string());

  Rng root(cfg.seed);
  Dataset train = make_dataset(root.split("data_train"), cfg.dataset.train_size, cfg.dataset);
  Dataset val = make_dataset(root.split("data_val"), cfg.dataset.val_size, cfg.dataset);
  log.line("dataset train=" + std::to_string(train.samples.size()) +
           " val=" + std::to_string(val.samples.size()) + " classes=" +
           std::to_string(cfg.dataset.num_classes));

  RunResult result;
  result.run_dir = cfg.out_dir;

  ToyNet teacher = acquire_teacher(cfg, train, val, log, &result.teacher_val_accuracy);

  Rng student_rng = root.split("student_init");
  ToyNet student = init_toy_net(spec_of(cfg.student, cfg.dataset), student_rng);

  const bool do_distill =
      cfg.distill.enabled && cfg.distill.mu > 0.0 && !cfg.distill.distill_levels.empty();
  DistillConfig dcfg;
  dcfg.mu = cfg.distill.mu;
  dcfg.distill_levels = cfg.distill.distill_levels;
  dcfg.affinity = cfg.distill.affinity;
  dcfg.pool_scale = cfg.distill.pool_scale;
  dcfg.residual = cfg.distill.residual;
  dcfg.embed_dim = cfg.distill.embed_dim;

  std::vector<LevelBank> banks;
  std::vector<std::vector<Tensor>> train_taps;
  std::vector<std::vector<Tensor>> val_taps;
  if (do_distill) {
    banks = make_banks(cfg, root.split("can_init"));
    train_taps = cache_teacher_taps(teacher, train, banks);
    val_taps = cache_teacher_taps(teacher, val, banks);
    log.line("distillation on: mu=" + fmt(cfg.distill.mu) + " affinity=" +
             to_string(cfg.distill.affinity) + " pool_scale=" +
             std::to_string(cfg.distill.pool_scale) +
             (cfg.distill.residual ? " residual" : " no-residual"));
  } else {
    log.line("distillation off: task loss only");
  }

  ParamRefs refs = param_refs(student, "student");
  {
    ParamRefs extra = bank_refs(banks);
    refs.insert(refs.end(), extra.begin(), extra.end());
  }
  SgdOptimizer opt(cfg.optimizer);

  std::ofstream jsonl((fs::path(cfg.out_dir) / "metrics.jsonl").string(), std::ios::trunc);
  std::ofstream csv((fs::path(cfg.out_dir) / "metrics.csv").string(), std::ios::trunc);
  if (!jsonl || !csv) throw IoError("cannot open metrics files under " + cfg.out_dir);
  csv << "epoch,split,task_loss,feat_loss,total_loss,pixel_accuracy,mean_iou,learning_rate\n";

  auto emit = [&](const MetricsRow& row) {
    result.rows.push_back(row);
    jsonl << row_json(row).dump() << "\n";
    csv << row_csv(row) << "\n";
    jsonl.flush();
    csv.flush();
  };

  std::vector<std::size_t> order(train.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = root.split("shuffle");

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double epoch_start = now_seconds();
    double lr = opt.learning_rate();
    shuffle_rng.shuffle(order);
    SplitStats train_st;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Tensor> grad_sum;
      for (std::size_t k = start; k < stop; ++k) {
        std::size_t idx = order[k];
        const auto& sample = train.samples[idx];
        Tape tape;
        ToyNetVars vars = stage(tape, student, true);
        std::vector<StagedBank> staged = stage_banks(tape, banks, true);
        ForwardResult out = forward(vars, student.spec, tape.constant(sample.image));
        DiffTensor task = task_loss(out.logits, sample.label_map);
        std::vector<std::pair<DiffTensor, DiffTensor>> feats;
        if (do_distill) feats = build_feats(tape, banks, staged, out, train_taps[idx]);
        auto [total, bd] = total_loss(task, feats, dcfg);
        check_finite(bd.total, "train epoch " + std::to_string(epoch));
        tape.backward(total);

        train_st.task_loss += bd.task_loss;
        train_st.feat_loss += bd.feat_loss_total;
        train_st.total_loss += bd.total;
        train_st.add_metrics(logits_tensor(out), sample.label_map, student.spec.num_classes);

        std::vector<DiffTensor> leaves = net_leaves(vars);
        append_bank_leaves(banks, staged, leaves);
        if (grad_sum.empty()) {
          for (auto& leaf : leaves) grad_sum.push_back(tape.grad_tensor(leaf));
        } else {
          for (std::size_t p = 0; p < leaves.size(); ++p) {
            Tensor g = tape.grad_tensor(leaves[p]);
            for (std::size_t e = 0; e < g.values.size(); ++e) grad_sum[p].values[e] += g.values[e];
          }
        }
      }
      double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grad_sum)
        for (auto& v : g.values) v *= inv;
      opt.step(refs, grad_sum);
    }
    train_st.finish(train.samples.size());

    SplitStats val_st = eval_split(student, banks, dcfg, do_distill, val, val_taps,
                                   "val epoch " + std::to_string(epoch));

    MetricsRow tr{epoch, "train", train_st.task_loss, train_st.feat_loss, train_st.total_loss,
                  train_st.pixel_accuracy, train_st.mean_iou, lr};
    MetricsRow vr{epoch, "val", val_st.task_loss, val_st.feat_loss, val_st.total_loss,
                  val_st.pixel_accuracy, val_st.mean_iou, lr};
    emit(tr);
    emit(vr);
    opt.on_epoch_end(epoch);

    log.line("epoch " + std::to_string(epoch) + "/" + std::to_string(cfg.epochs) +
             " train_total=" + fmt(train_st.total_loss) + " val_acc=" +
             fmt(val_st.pixel_accuracy) + " lr=" + fmt(lr) + " wall_seconds=" +
             fmt(now_seconds() - epoch_start));

    result.final_val_accuracy = val_st.pixel_accuracy;
    result.final_val_mean_iou = val_st.mean_iou;
    result.final_val_feat_loss = val_st.feat_loss;
  }

  save_checkpoint(refs, (fs::path(cfg.out_dir) / "student.ckpt").string());
  log.line("student saved to " + (fs::path(cfg.out_dir) / "student.ckpt").string());
  log.line("final val pixel_accuracy=" + fmt(result.final_val_accuracy) +
           " mean_iou=" + fmt(result.final_val_mean_iou));
  return result;
}

}  // namespace cankd
