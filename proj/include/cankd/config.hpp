#pragma once

#include <string>
#include <vector>

#include "cankd/can_block.hpp"
#include "cankd/optim.hpp"

namespace cankd {

struct NetConfig {
  std::vector<int> widths;
  std::vector<int> tap_levels;
};

struct DatasetConfig {
  int height = 32;
  int width = 32;
  int num_classes = 4;
  int train_size = 16;
  int val_size = 64;
};

struct DistillSection {
  bool enabled = true;
  double mu = 5.0;
  AffinityKind affinity = AffinityKind::DotProduct;
  int pool_scale = 2;
  bool residual = true;
  std::vector<int> distill_levels = {1, 2};
  int embed_dim = 0;  // 0 = teacher channel count
};

// Everything one run needs. Parsed from JSON (schema_version 1, unknown
// keys rejected), optionally overridden by CLI flags, validated before any
// training starts.
struct ExperimentConfig {
  int schema_version = 1;
  std::uint64_t seed = 1;
  int epochs = 24;
  int batch_size = 4;
  int teacher_epochs = 30;
  OptimizerConfig optimizer;
  DistillSection distill;
  NetConfig teacher = {{16, 32, 32}, {1, 2}};
  NetConfig student = {{8, 16, 16}, {1, 2}};
  DatasetConfig dataset;
  std::string out_dir = "runs/exp";
  std::string teacher_ckpt;  // empty = pretrain here
};

ExperimentConfig default_config();

// Throws ConfigInvalid on structural or semantic problems.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
void validate(const ExperimentConfig& cfg);

std::string to_json(const ExperimentConfig& cfg);
void save_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace cankd
