#pragma once

#include <string>
#include <vector>

#include "cankd/config.hpp"

namespace cankd {

struct MetricsRow {
  int epoch = 0;
  std::string split;
  double task_loss = 0.0;
  double feat_loss = 0.0;
  double total_loss = 0.0;
  double pixel_accuracy = 0.0;
  double mean_iou = 0.0;
  double learning_rate = 0.0;
};

struct RunResult {
  std::string run_dir;
  std::vector<MetricsRow> rows;
  double final_val_accuracy = 0.0;
  double final_val_mean_iou = 0.0;
  double final_val_feat_loss = 0.0;
  double teacher_val_accuracy = 0.0;
};

// Trains (or loads) the teacher, trains the student per the config, and
// writes config.json, metrics.jsonl, metrics.csv, run.log and checkpoints
// into cfg.out_dir. Deterministic: identical config gives byte-identical
// metrics files.
RunResult run_experiment(const ExperimentConfig& cfg);

// Pretrains the teacher of cfg and saves it to path unless the file already
// exists. Returns the teacher's validation pixel accuracy (NaN when the
// checkpoint was reused and no evaluation ran).
double prepare_teacher(const ExperimentConfig& cfg, const std::string& path);

}  // namespace cankd
