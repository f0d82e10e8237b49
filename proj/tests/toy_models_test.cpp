#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cankd/errors.hpp"
#include "cankd/grad_check.hpp"
#include "cankd/ops.hpp"
#include "cankd/rng.hpp"
#include "cankd/synthetic.hpp"
#include "cankd/toy_models.hpp"

using namespace cankd;
namespace op = cankd::ops;

namespace {

LabelMap random_labels(std::int64_t h, std::int64_t w, int num_classes, Rng& rng) {
  LabelMap m;
  m.h = h;
  m.w = w;
  for (std::int64_t i = 0; i < h * w; ++i) m.ids.push_back(rng.uniform_int(0, num_classes - 1));
  return m;
}

}  // namespace

TEST_CASE("generate_sample determinism and structure") {
  SUBCASE("same seed twice is byte identical") {
    SyntheticSample a = generate_sample(1234, 16, 16, 4);
    SyntheticSample b = generate_sample(1234, 16, 16, 4);
    CHECK(a.image.values == b.image.values);
    CHECK(a.label_map.ids == b.label_map.ids);
    SyntheticSample c = generate_sample(1235, 16, 16, 4);
    CHECK(a.label_map.ids != c.label_map.ids);
  }
  SUBCASE("zero shapes forced gives an all-background label map") {
    SyntheticSample s = generate_sample(9, 16, 16, 2, 0, 0);
    for (int id : s.label_map.ids) CHECK(id == 0);
  }
  SUBCASE("image values stay in range") {
    SyntheticSample s = generate_sample(77, 16, 16, 4);
    for (double v : s.image.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SUBCASE("class frequencies over many seeds") {
    const int num_classes = 4;
    std::vector<int> present(num_classes, 0);
    std::int64_t background_pixels = 0, total_pixels = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      SyntheticSample s = generate_sample(seed, 16, 16, num_classes);
      std::vector<bool> seen(num_classes, false);
      for (int id : s.label_map.ids) {
        seen[static_cast<std::size_t>(id)] = true;
        if (id == 0) ++background_pixels;
        ++total_pixels;
      }
      for (int c = 0; c < num_classes; ++c)
        if (seen[static_cast<std::size_t>(c)]) ++present[static_cast<std::size_t>(c)];
    }
    CHECK(background_pixels * 2 > total_pixels);
    for (int c = 1; c < num_classes; ++c) CHECK(present[static_cast<std::size_t>(c)] > 100);
  }
}

TEST_CASE("task_loss closed forms") {
  Rng rng(7);
  SUBCASE("uniform logits give ln(num_classes)") {
    Tape tape;
    auto logits = tape.constant(Tensor(Shape{4, 4, 4}, 0.0));
    LabelMap labels = random_labels(4, 4, 4, rng);
    auto loss = task_loss(logits, labels);
    CHECK(loss.values()[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("confident correct logits drive the loss to zero") {
    LabelMap labels = random_labels(3, 3, 3, rng);
    Tensor logits(Shape{3, 3, 3}, 0.0);
    for (std::int64_t p = 0; p < 9; ++p)
      logits.values[static_cast<std::size_t>(labels.ids[static_cast<std::size_t>(p)] * 9 + p)] =
          25.0;
    Tape tape;
    auto loss = task_loss(tape.constant(logits), labels);
    CHECK(loss.values()[0] >= 0.0);
    CHECK(loss.values()[0] <= 1e-9);
  }
  SUBCASE("matches a naive per-pixel loop") {
    Tensor logits = random_uniform(Shape{4, 3, 5}, -2.0, 2.0, rng);
    LabelMap labels = random_labels(3, 5, 4, rng);
    Tape tape;
    auto loss = task_loss(tape.constant(logits), labels);

    double ref = 0.0;
    for (std::int64_t p = 0; p < 15; ++p) {
      double denom = 0.0;
      for (int c = 0; c < 4; ++c)
        denom += std::exp(logits.values[static_cast<std::size_t>(c * 15 + p)]);
      const int label = labels.ids[static_cast<std::size_t>(p)];
      ref -= std::log(std::exp(logits.values[static_cast<std::size_t>(label * 15 + p)]) / denom);
    }
    ref /= 15.0;
    CHECK(std::abs(loss.values()[0] - ref) <= 1e-10);
  }
  SUBCASE("label out of range is rejected") {
    Tape tape;
    auto logits = tape.constant(Tensor(Shape{2, 2, 2}, 0.0));
    LabelMap labels{2, 2, {0, 1, 3, 0}};
    CHECK_THROWS_AS(task_loss(logits, labels), ShapeMismatch);
  }
}

TEST_CASE("cross_entropy gradient matches finite differences") {
  Rng rng(11);
  Tensor logits = random_uniform(Shape{3, 3, 3}, -1.0, 1.0, rng);
  LabelMap labels = random_labels(3, 3, 3, rng);
  GradCheckProblem problem;
  problem.params = {{"logits", &logits}};
  problem.build = [&labels](Tape&, const std::vector<DiffTensor>& leaves) {
    return cross_entropy(leaves[0], labels);
  };
  auto report = grad_check(problem);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("forward shapes and closed forms") {
  Rng rng(13);
  SUBCASE("zero head weights give uniform logits and ln K loss") {
    ToyNetSpec spec;
    spec.widths = {4, 6};
    spec.num_classes = 4;
    spec.tap_levels = {1};
    ToyNet net = init_toy_net(spec, rng);
    for (double& v : net.head_w.values) v = 0.0;

    SyntheticSample s = generate_sample(3, 16, 16, 4);
    Tape tape;
    auto res = forward(stage(tape, net, false), spec, tape.constant(s.image));
    CHECK(res.logits.shape() == Shape{4, 16, 16});
    REQUIRE(res.taps.size() == 1);
    CHECK(res.taps[0].shape() == Shape{6, 8, 8});
    auto loss = task_loss(res.logits, s.label_map);
    CHECK(loss.values()[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("doubling the input doubles zero-bias stage features") {
    ToyNetSpec spec;
    spec.widths = {5};
    spec.num_classes = 3;
    spec.tap_levels = {0};
    ToyNet net = init_toy_net(spec, rng);

    Tensor x = random_uniform(Shape{3, 8, 8}, 0.0, 1.0, rng);
    Tensor x2 = x;
    for (double& v : x2.values) v *= 2.0;

    Tape tape;
    auto vars = stage(tape, net, false);
    auto a = forward(vars, spec, tape.constant(x));
    auto b = forward(vars, spec, tape.constant(x2));
    REQUIRE(a.taps.size() == 1);
    for (std::size_t i = 0; i < a.taps[0].values().size(); ++i)
      CHECK(b.taps[0].values()[i] == 2.0 * a.taps[0].values()[i]);
  }
  SUBCASE("forward is deterministic") {
    ToyNetSpec spec;
    spec.widths = {4, 5};
    spec.tap_levels = {0, 1};
    ToyNet net = init_toy_net(spec, rng);
    SyntheticSample s = generate_sample(21, 16, 16, 4);
    Tape t1, t2;
    auto a = forward(stage(t1, net, false), spec, t1.constant(s.image));
    auto b = forward(stage(t2, net, false), spec, t2.constant(s.image));
    CHECK(a.logits.values() == b.logits.values());
  }
  SUBCASE("wrong input channel count is rejected") {
    ToyNetSpec spec;
    ToyNet net = init_toy_net(spec, rng);
    Tape tape;
    auto vars = stage(tape, net, false);
    CHECK_THROWS_AS(forward(vars, spec, tape.constant(Tensor(Shape{2, 16, 16}, 0.0))),
                    ShapeMismatch);
  }
}

TEST_CASE("task gradient through the whole net passes finite differences") {
  Rng rng(17);
  ToyNetSpec spec;
  spec.widths = {2, 3};
  spec.num_classes = 3;
  spec.tap_levels = {1};
  ToyNet net = init_toy_net(spec, rng);
  // Biases start at zero; nudge them so the check exercises nonzero paths.
  for (auto& b : net.conv_b)
    for (double& v : b.values) v = rng.uniform(-0.1, 0.1);

  SyntheticSample s = generate_sample(5, 8, 8, 3);

  GradCheckProblem problem;
  problem.params = param_refs(net, "net");
  problem.build = [&](Tape& tape, const std::vector<DiffTensor>& leaves) {
    ToyNetVars vars;
    std::size_t i = 0;
    for (std::size_t st = 0; st < net.conv_w.size(); ++st) {
      vars.conv_w.push_back(leaves[i++]);
      vars.conv_b.push_back(leaves[i++]);
    }
    vars.head_w = leaves[i++];
    vars.head_b = leaves[i++];
    auto res = forward(vars, spec, tape.constant(s.image));
    return task_loss(res.logits, s.label_map);
  };
  auto report = grad_check(problem);
  for (const auto& entry : report.entries) {
    CAPTURE(entry.name);
    CHECK(entry.max_rel_err < 1e-4);
  }
}

TEST_CASE("eval_metrics") {
  LabelMap labels{2, 2, {0, 1, 2, 1}};
  SUBCASE("perfect prediction") {
    Tensor logits(Shape{3, 2, 2}, 0.0);
    for (std::int64_t p = 0; p < 4; ++p)
      logits.values[static_cast<std::size_t>(labels.ids[static_cast<std::size_t>(p)] * 4 + p)] =
          5.0;
    PixelMetrics m = eval_metrics(logits, labels, 3);
    CHECK(m.pixel_accuracy == 1.0);
    CHECK(m.mean_iou == 1.0);
  }
  SUBCASE("all background prediction") {
    Tensor logits(Shape{3, 2, 2}, 0.0);
    for (std::int64_t p = 0; p < 4; ++p) logits.values[static_cast<std::size_t>(p)] = 5.0;
    PixelMetrics m = eval_metrics(logits, labels, 3);
    CHECK(m.pixel_accuracy == doctest::Approx(0.25).epsilon(1e-12));
    // Classes: 0 -> inter 1, union 4; 1 -> 0/2; 2 -> 0/1.
    CHECK(m.mean_iou == doctest::Approx((0.25 + 0.0 + 0.0) / 3.0).epsilon(1e-12));
  }
}
