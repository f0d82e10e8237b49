#include "cankd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cankd/errors.hpp"

namespace cankd {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const char* where, const std::set<std::string>& known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) {
      throw ConfigInvalid(std::string("unknown key '") + it.key() + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigInvalid("config root must be a JSON object");

  reject_unknown(root, "config root",
                 {"schema_version", "seed", "epochs", "batch_size", "teacher_epochs", "optimizer",
                  "distill", "teacher", "student", "dataset", "out_dir", "teacher_ckpt"});
  if (!root.contains("schema_version")) throw ConfigInvalid("config lacks schema_version");

  ExperimentConfig cfg;
  read(root, "schema_version", cfg.schema_version);
  if (cfg.schema_version != 1) {
    throw ConfigInvalid("unsupported schema_version " + std::to_string(cfg.schema_version));
  }
  read(root, "seed", cfg.seed);
  read(root, "epochs", cfg.epochs);
  read(root, "batch_size", cfg.batch_size);
  read(root, "teacher_epochs", cfg.teacher_epochs);
  read(root, "out_dir", cfg.out_dir);
  read(root, "teacher_ckpt", cfg.teacher_ckpt);

  if (root.contains("optimizer")) {
    const json& opt = root.at("optimizer");
    reject_unknown(opt, "optimizer",
                   {"learning_rate", "momentum", "weight_decay", "step_epochs", "decay_factor"});
    read(opt, "learning_rate", cfg.optimizer.learning_rate);
    read(opt, "momentum", cfg.optimizer.momentum);
    read(opt, "weight_decay", cfg.optimizer.weight_decay);
    read(opt, "step_epochs", cfg.optimizer.step_epochs);
    read(opt, "decay_factor", cfg.optimizer.decay_factor);
  }

  if (root.contains("distill")) {
    const json& d = root.at("distill");
    reject_unknown(d, "distill", {"enabled", "mu", "affinity", "pool_scale", "residual",
                                  "distill_levels", "embed_dim"});
    read(d, "enabled", cfg.distill.enabled);
    read(d, "mu", cfg.distill.mu);
    if (d.contains("affinity")) {
      cfg.distill.affinity = affinity_from_string(d.at("affinity").get<std::string>());
    }
    read(d, "pool_scale", cfg.distill.pool_scale);
    read(d, "residual", cfg.distill.residual);
    read(d, "distill_levels", cfg.distill.distill_levels);
    read(d, "embed_dim", cfg.distill.embed_dim);
  }

  for (auto [key, net] : {std::pair{"teacher", &cfg.teacher}, std::pair{"student", &cfg.student}}) {
    if (!root.contains(key)) continue;
    const json& n = root.at(key);
    reject_unknown(n, key, {"widths", "tap_levels"});
    read(n, "widths", net->widths);
    read(n, "tap_levels", net->tap_levels);
  }

  if (root.contains("dataset")) {
    const json& ds = root.at("dataset");
    reject_unknown(ds, "dataset", {"height", "width", "num_classes", "train_size", "val_size"});
    read(ds, "height", cfg.dataset.height);
    read(ds, "width", cfg.dataset.width);
    read(ds, "num_classes", cfg.dataset.num_classes);
    read(ds, "train_size", cfg.dataset.train_size);
    read(ds, "val_size", cfg.dataset.val_size);
  }

  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot open config: " + path);
  std::stringstream buf;
  buf << file.rdbuf();
  return parse_config(buf.str());
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigInvalid("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigInvalid("batch_size must be >= 1");
  if (cfg.teacher_epochs < 1) throw ConfigInvalid("teacher_epochs must be >= 1");
  if (cfg.dataset.height < 8 || cfg.dataset.width < 8) {
    throw ConfigInvalid("dataset height/width must be >= 8");
  }
  if (cfg.dataset.num_classes < 2 || cfg.dataset.num_classes > 8) {
    throw ConfigInvalid("num_classes must be in [2,8]");
  }
  if (cfg.dataset.train_size < 1 || cfg.dataset.val_size < 1) {
    throw ConfigInvalid("train_size and val_size must be >= 1");
  }
  if (cfg.optimizer.learning_rate <= 0.0) throw ConfigInvalid("learning_rate must be positive");
  if (cfg.optimizer.momentum < 0.0 || cfg.optimizer.momentum >= 1.0) {
    throw ConfigInvalid("momentum must be in [0,1)");
  }
  if (cfg.optimizer.decay_factor <= 0.0 || cfg.optimizer.decay_factor > 1.0) {
    throw ConfigInvalid("decay_factor must be in (0,1]");
  }
  if (cfg.distill.mu < 0.0) throw ConfigInvalid("mu must be >= 0");
  if (cfg.distill.pool_scale != 1 && cfg.distill.pool_scale != 2 && cfg.distill.pool_scale != 4 &&
      cfg.distill.pool_scale != 8) {
    throw ConfigInvalid("pool_scale must be one of {1,2,4,8}");
  }
  if (cfg.distill.embed_dim < 0) throw ConfigInvalid("embed_dim must be >= 0");

  for (auto [name, net] : {std::pair{"teacher", &cfg.teacher}, std::pair{"student", &cfg.student}}) {
    if (net->widths.empty()) throw ConfigInvalid(std::string(name) + " needs at least one stage");
    for (int w : net->widths) {
      if (w < 1) throw ConfigInvalid(std::string(name) + " stage width must be >= 1");
    }
    for (int tap : net->tap_levels) {
      if (tap < 0 || tap >= static_cast<int>(net->widths.size())) {
        throw ConfigInvalid(std::string(name) + " tap level " + std::to_string(tap) +
                            " out of range");
      }
    }
  }
  if (cfg.teacher.widths.size() != cfg.student.widths.size()) {
    throw ConfigInvalid("teacher and student must have the same stage count");
  }
  for (std::size_t i = 0; i < cfg.teacher.widths.size(); ++i) {
    if (cfg.teacher.widths[i] < cfg.student.widths[i]) {
      throw ConfigInvalid("teacher width must be >= student width at stage " + std::to_string(i));
    }
  }
  if (cfg.distill.enabled) {
    if (cfg.distill.distill_levels.empty()) {
      throw ConfigInvalid("distill_levels must be non-empty when distillation is enabled");
    }
    for (int level : cfg.distill.distill_levels) {
      const auto has = [level](const std::vector<int>& taps) {
        for (int t : taps)
          if (t == level) return true;
        return false;
      };
      if (!has(cfg.teacher.tap_levels) || !has(cfg.student.tap_levels)) {
        throw ConfigInvalid("distill level " + std::to_string(level) +
                            " must be a tap level of both networks");
      }
    }
  }
}

std::string to_json(const ExperimentConfig& cfg) {
  json root;
  root["schema_version"] = cfg.schema_version;
  root["seed"] = cfg.seed;
  root["epochs"] = cfg.epochs;
  root["batch_size"] = cfg.batch_size;
  root["teacher_epochs"] = cfg.teacher_epochs;
  root["optimizer"] = {{"learning_rate", cfg.optimizer.learning_rate},
                       {"momentum", cfg.optimizer.momentum},
                       {"weight_decay", cfg.optimizer.weight_decay},
                       {"step_epochs", cfg.optimizer.step_epochs},
                       {"decay_factor", cfg.optimizer.decay_factor}};
  root["distill"] = {{"enabled", cfg.distill.enabled},
                     {"mu", cfg.distill.mu},
                     {"affinity", to_string(cfg.distill.affinity)},
                     {"pool_scale", cfg.distill.pool_scale},
                     {"residual", cfg.distill.residual},
                     {"distill_levels", cfg.distill.distill_levels},
                     {"embed_dim", cfg.distill.embed_dim}};
  root["teacher"] = {{"widths", cfg.teacher.widths}, {"tap_levels", cfg.teacher.tap_levels}};
  root["student"] = {{"widths", cfg.student.widths}, {"tap_levels", cfg.student.tap_levels}};
  root["dataset"] = {{"height", cfg.dataset.height},
                     {"width", cfg.dataset.width},
                     {"num_classes", cfg.dataset.num_classes},
                     {"train_size", cfg.dataset.train_size},
                     {"val_size", cfg.dataset.val_size}};
  root["out_dir"] = cfg.out_dir;
  root["teacher_ckpt"] = cfg.teacher_ckpt;
  return root.dump(2) + "\n";
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw IoError("cannot write config: " + path);
  file << to_json(cfg);
}

}  // namespace cankd
