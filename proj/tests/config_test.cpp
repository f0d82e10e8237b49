#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <string>

#include "cankd/config.hpp"
#include "cankd/errors.hpp"

using namespace cankd;

namespace {

std::string minimal() { return R"({"schema_version": 1})"; }

}  // namespace

TEST_CASE("minimal config yields the documented defaults") {
  ExperimentConfig cfg = parse_config(minimal());
  CHECK(cfg.seed == 1);
  CHECK(cfg.epochs == 24);
  CHECK(cfg.batch_size == 4);
  CHECK(cfg.optimizer.step_epochs == std::vector<int>{16, 22});
  CHECK(cfg.optimizer.decay_factor == 0.1);
  CHECK(cfg.optimizer.momentum == 0.9);
  CHECK(cfg.optimizer.weight_decay == 0.0001);
  CHECK(cfg.distill.enabled);
  CHECK(cfg.distill.mu == 5.0);
  CHECK(cfg.distill.affinity == AffinityKind::DotProduct);
  CHECK(cfg.teacher.widths == std::vector<int>{16, 32, 32});
  CHECK(cfg.student.widths == std::vector<int>{8, 16, 16});
  CHECK(cfg.distill.distill_levels == std::vector<int>{1, 2});
  CHECK(cfg.dataset.height == 32);
  CHECK(cfg.dataset.num_classes == 4);
}

TEST_CASE("serialize then parse is the identity") {
  ExperimentConfig cfg = default_config();
  cfg.seed = 77;
  cfg.distill.affinity = AffinityKind::EmbeddedGaussian;
  cfg.distill.pool_scale = 4;
  cfg.out_dir = "runs/somewhere";
  ExperimentConfig back = parse_config(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(back.seed == 77);
  CHECK(back.distill.affinity == AffinityKind::EmbeddedGaussian);
  CHECK(back.distill.pool_scale == 4);
}

TEST_CASE("save_config and load_config round-trip through a file") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "cankd_cfg_test";
  fs::create_directories(dir);
  fs::path path = dir / "cfg.json";
  ExperimentConfig cfg = default_config();
  cfg.epochs = 3;
  save_config(cfg, path.string());
  ExperimentConfig back = load_config(path.string());
  CHECK(back.epochs == 3);
  CHECK(to_json(back) == to_json(cfg));
}

TEST_CASE("schema_version is mandatory and pinned") {
  CHECK_THROWS_AS(parse_config(R"({})"), ConfigInvalid);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 2})"), ConfigInvalid);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": "1"})"), ConfigInvalid);
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "typo": 3})"), ConfigInvalid);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "optimizer": {"lr": 0.1}})"),
                  ConfigInvalid);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "distill": {"mu_weight": 5}})"),
                  ConfigInvalid);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "teacher": {"width": [4]}})"),
                  ConfigInvalid);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "dataset": {"h": 32}})"), ConfigInvalid);
}

TEST_CASE("malformed JSON and wrong value types are ConfigInvalid") {
  CHECK_THROWS_AS(parse_config("not json"), ConfigInvalid);
  CHECK_THROWS_AS(parse_config(R"([1,2,3])"), ConfigInvalid);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "epochs": "many"})"), ConfigInvalid);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "distill": {"affinity": "cosine"}})"),
                  ConfigInvalid);
}

TEST_CASE("semantic validation catches bad field combinations") {
  auto with = [](const std::string& body) {
    return std::string(R"({"schema_version": 1, )") + body + "}";
  };
  CHECK_THROWS_AS(parse_config(with(R"("epochs": 0)")), ConfigInvalid);
  CHECK_THROWS_AS(parse_config(with(R"("optimizer": {"learning_rate": 0})")), ConfigInvalid);
  CHECK_THROWS_AS(parse_config(with(R"("optimizer": {"momentum": 1.0})")), ConfigInvalid);
  CHECK_THROWS_AS(parse_config(with(R"("optimizer": {"decay_factor": 0})")), ConfigInvalid);
  CHECK_THROWS_AS(parse_config(with(R"("distill": {"mu": -1})")), ConfigInvalid);
  CHECK_THROWS_AS(parse_config(with(R"("distill": {"pool_scale": 3})")), ConfigInvalid);
  CHECK_THROWS_AS(parse_config(with(R"("dataset": {"num_classes": 9})")), ConfigInvalid);
  CHECK_THROWS_AS(parse_config(with(R"("dataset": {"height": 4})")), ConfigInvalid);
  // teacher thinner than student
  CHECK_THROWS_AS(parse_config(with(R"("teacher": {"widths": [4, 8, 8], "tap_levels": [1, 2]})")),
                  ConfigInvalid);
  // stage count mismatch
  CHECK_THROWS_AS(parse_config(with(R"("teacher": {"widths": [16, 32], "tap_levels": [1]})")),
                  ConfigInvalid);
  // distill level not a tap of both nets
  CHECK_THROWS_AS(parse_config(with(R"("distill": {"distill_levels": [0]})")), ConfigInvalid);
  // tap level out of range
  CHECK_THROWS_AS(
      parse_config(with(R"("student": {"widths": [8, 16, 16], "tap_levels": [3]})")),
      ConfigInvalid);
  // disabling distillation lifts the distill-level constraint
  ExperimentConfig off = parse_config(
      with(R"("distill": {"enabled": false, "distill_levels": [0]}, "teacher": {"widths": [16, 32, 32], "tap_levels": [1, 2]})"));
  CHECK_FALSE(off.distill.enabled);
}

TEST_CASE("missing config file is IoError") {
  CHECK_THROWS_AS(load_config("/nonexistent/path/cfg.json"), IoError);
}
