#pragma once

#include <string>
#include <vector>

#include "cankd/config.hpp"

namespace cankd {

struct AblationRun {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double val_accuracy = 0.0;
  double val_mean_iou = 0.0;
  double feat_loss = 0.0;
  std::string run_dir;
};

struct AblationArm {
  std::string name;
  std::vector<AblationRun> runs;
  double mean_accuracy = 0.0;
  double mean_iou = 0.0;
  bool best = false;
};

struct AblationReport {
  std::string sweep;
  std::vector<AblationArm> arms;
  std::string best_arm;
};

// Known sweep names: "mu", "affinity", "pool", "residual".
std::vector<std::string> ablation_sweeps();

// Runs every arm of the sweep over num_seeds consecutive seeds starting at
// base.seed. The teacher is pretrained once per seed and shared across arms
// (it does not depend on the swept knob). A failing arm is recorded with its
// error message; the remaining arms still run. Writes report.csv and
// report.json into out_dir.
AblationReport run_ablation(const ExperimentConfig& base, const std::string& sweep, int num_seeds,
                            const std::string& out_dir);

void write_ablation_report(const AblationReport& report, const std::string& out_dir);

}  // namespace cankd
