#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cankd/errors.hpp"
#include "cankd/grad_check.hpp"
#include "cankd/ops.hpp"
#include "cankd/rng.hpp"
#include "cankd/tape.hpp"
#include "cankd/tensor.hpp"

using namespace cankd;
namespace op = cankd::ops;

namespace {

Tensor make(Shape s, std::vector<double> v) { return Tensor(std::move(s), std::move(v)); }

// Finite-difference check of reduce_sum(f(x)) for a unary op, one seed.
template <typename Fn>
double fd_max_rel_err(const Shape& shape, Fn&& fn, std::uint64_t seed, double lo = -1.0,
                      double hi = 1.0) {
  Rng rng(seed);
  Tensor x = random_uniform(shape, lo, hi, rng);
  GradCheckProblem problem;
  problem.params = {{"x", &x}};
  problem.build = [&fn](Tape& tape, const std::vector<DiffTensor>& leaves) {
    (void)tape;
    return op::reduce_sum(fn(leaves[0]));
  };
  return grad_check(problem).max_rel_err;
}

}  // namespace

TEST_CASE("matmul forward") {
  Tape tape;
  SUBCASE("identity") {
    auto a = tape.constant(make(Shape{2, 2}, {1, 0, 0, 1}));
    auto b = tape.constant(make(Shape{2, 2}, {1, 2, 3, 4}));
    auto z = op::matmul(a, b);
    CHECK(z.values() == std::vector<double>{1, 2, 3, 4});
  }
  SUBCASE("1x2 times 2x1") {
    auto a = tape.constant(make(Shape{1, 2}, {1, 2}));
    auto b = tape.constant(make(Shape{2, 1}, {3, 4}));
    auto z = op::matmul(a, b);
    CHECK(z.shape() == Shape{1, 1});
    CHECK(z.values()[0] == 11.0);
  }
  SUBCASE("inner extent mismatch") {
    auto a = tape.constant(make(Shape{1, 2}, {1, 2}));
    auto b = tape.constant(make(Shape{3, 1}, {3, 4, 5}));
    CHECK_THROWS_AS(op::matmul(a, b), ShapeMismatch);
  }
}

TEST_CASE("matmul gradient vs finite differences") {
  Rng rng(11);
  Tensor a = random_uniform(Shape{3, 4}, -1.0, 1.0, rng);
  Tensor b = random_uniform(Shape{4, 2}, -1.0, 1.0, rng);
  GradCheckProblem problem;
  problem.params = {{"a", &a}, {"b", &b}};
  problem.build = [](Tape&, const std::vector<DiffTensor>& leaves) {
    return op::reduce_sum(op::matmul(leaves[0], leaves[1]));
  };
  auto report = grad_check(problem);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("conv1x1 forward") {
  Tape tape;
  SUBCASE("identity weight") {
    auto x = tape.constant(make(Shape{2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}));
    auto w = tape.constant(make(Shape{2, 2}, {1, 0, 0, 1}));
    auto z = op::conv1x1(x, w);
    CHECK(z.values() == x.values());
  }
  SUBCASE("single channel doubling") {
    auto x = tape.constant(make(Shape{1, 2, 2}, {1, 1, 1, 1}));
    auto w = tape.constant(make(Shape{1, 1}, {2}));
    auto z = op::conv1x1(x, w);
    CHECK(z.values() == std::vector<double>{2, 2, 2, 2});
  }
  SUBCASE("channel mismatch") {
    auto x = tape.constant(Tensor(Shape{3, 2, 2}, 1.0));
    auto w = tape.constant(Tensor(Shape{4, 2}, 1.0));
    CHECK_THROWS_AS(op::conv1x1(x, w), ShapeMismatch);
  }
}

TEST_CASE("conv1x1 equals reshape-matmul formulation") {
  Rng rng(7);
  Tensor x = random_uniform(Shape{3, 4, 5}, -1.0, 1.0, rng);
  Tensor w = random_uniform(Shape{6, 3}, -1.0, 1.0, rng);

  Tape tape;
  auto xd = tape.constant(x);
  auto wd = tape.constant(w);
  auto direct = op::conv1x1(xd, wd);

  // (HW x C_in) * w^T, transposed back to channel-major order.
  auto rows = op::transpose2d(op::reshape(xd, Shape{3, 20}));
  auto alt = op::transpose2d(op::matmul(rows, op::transpose2d(wd)));

  REQUIRE(direct.numel() == alt.numel());
  for (std::size_t i = 0; i < direct.values().size(); ++i)
    CHECK(direct.values()[i] == doctest::Approx(alt.values()[i]).epsilon(1e-12));
}

TEST_CASE("maxpool2d forward") {
  Tape tape;
  SUBCASE("2x2 window") {
    auto x = tape.constant(make(Shape{1, 2, 2}, {1, 2, 3, 4}));
    auto z = op::maxpool2d(x, 2);
    CHECK(z.shape() == Shape{1, 1, 1});
    CHECK(z.values()[0] == 4.0);
  }
  SUBCASE("constant map stays constant") {
    auto x = tape.constant(Tensor(Shape{2, 5, 6}, 3.25));
    auto z = op::maxpool2d(x, 2);
    CHECK(z.shape() == Shape{2, 3, 3});
    for (double v : z.values()) CHECK(v == 3.25);
  }
  SUBCASE("invalid scale") {
    auto x = tape.constant(Tensor(Shape{1, 4, 4}, 0.0));
    CHECK_THROWS_AS(op::maxpool2d(x, 3), InvalidScale);
    CHECK_THROWS_AS(op::maxpool2d(x, 1), InvalidScale);
  }
}

TEST_CASE("maxpool2d matches naive window loop") {
  Rng rng(21);
  Tensor x = random_uniform(Shape{2, 6, 6}, -1.0, 1.0, rng);
  Tape tape;
  auto z = op::maxpool2d(tape.constant(x), 2);
  for (std::int64_t c = 0; c < 2; ++c)
    for (std::int64_t oy = 0; oy < 3; ++oy)
      for (std::int64_t ox = 0; ox < 3; ++ox) {
        double best = x.at(c, oy * 2, ox * 2);
        for (std::int64_t dy = 0; dy < 2; ++dy)
          for (std::int64_t dx = 0; dx < 2; ++dx)
            best = std::max(best, x.at(c, oy * 2 + dy, ox * 2 + dx));
        CHECK(z.values()[static_cast<std::size_t>((c * 3 + oy) * 3 + ox)] == best);
      }
}

TEST_CASE("maxpool2d ragged windows and tie gradient") {
  Tape tape;
  SUBCASE("ceil output shape") {
    auto x = tape.constant(Tensor(Shape{1, 5, 7}, 1.0));
    CHECK(op::maxpool2d(x, 4).shape() == Shape{1, 2, 2});
    CHECK(op::maxpool2d(x, 8).shape() == Shape{1, 1, 1});
  }
  SUBCASE("tie routes to first occurrence") {
    auto x = tape.leaf(make(Shape{1, 2, 2}, {5, 5, 5, 5}), true);
    auto z = op::reduce_sum(op::maxpool2d(x, 2));
    tape.backward(z);
    CHECK(x.grad() == std::vector<double>{1, 0, 0, 0});
  }
}

TEST_CASE("softmax_rows forward") {
  Tape tape;
  SUBCASE("uniform row") {
    auto x = tape.constant(make(Shape{1, 4}, {2, 2, 2, 2}));
    auto y = op::softmax_rows(x);
    for (double v : y.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("closed form 1:3 odds") {
    auto x = tape.constant(make(Shape{1, 2}, {0.0, std::log(3.0)}));
    auto y = op::softmax_rows(x);
    CHECK(y.values()[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(y.values()[1] == doctest::Approx(0.75).epsilon(1e-12));
  }
}

TEST_CASE("softmax_rows rows sum to one and shift invariance") {
  Rng rng(5);
  Tensor x = random_uniform(Shape{4, 6}, -3.0, 3.0, rng);
  Tensor shifted = x;
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 6; ++j) shifted[i * 6 + j] += 17.5;

  Tape tape;
  auto y = op::softmax_rows(tape.constant(x));
  auto y2 = op::softmax_rows(tape.constant(shifted));
  for (std::int64_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < 6; ++j) s += y.values()[static_cast<std::size_t>(i * 6 + j)];
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
  for (std::size_t i = 0; i < y.values().size(); ++i)
    CHECK(std::abs(y.values()[i] - y2.values()[i]) <= 1e-12);
}

TEST_CASE("softmax_rows gradient vs finite differences") {
  // Weighted sum output so the gradient is not uniformly zero across a row.
  Rng rng(13);
  Tensor x = random_uniform(Shape{3, 5}, -2.0, 2.0, rng);
  Tensor w = random_uniform(Shape{3, 5}, -1.0, 1.0, rng);
  GradCheckProblem problem;
  problem.params = {{"x", &x}};
  problem.build = [&w](Tape& tape, const std::vector<DiffTensor>& leaves) {
    auto weights = tape.constant(w);
    return op::reduce_sum(op::mul(op::softmax_rows(leaves[0]), weights));
  };
  auto report = grad_check(problem);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("backward basics") {
  SUBCASE("identity chain") {
    Tape tape;
    auto x = tape.leaf(make(Shape{1}, {4.0}), true);
    auto y = op::reshape(x, Shape{1});
    tape.backward(y);
    CHECK(x.grad() == std::vector<double>{1.0});
  }
  SUBCASE("sum of squares") {
    Tape tape;
    auto x = tape.leaf(make(Shape{3}, {1, 2, 3}), true);
    auto y = op::reduce_sum(op::mul(x, x));
    tape.backward(y);
    CHECK(x.grad() == std::vector<double>{2, 4, 6});
  }
  SUBCASE("non-scalar root rejected") {
    Tape tape;
    auto x = tape.leaf(make(Shape{3}, {1, 2, 3}), true);
    auto y = op::mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), NotScalar);
  }
}

TEST_CASE("diamond graph accumulates both paths") {
  Rng rng(3);
  Tensor x = random_uniform(Shape{4}, -1.0, 1.0, rng);
  GradCheckProblem problem;
  problem.params = {{"x", &x}};
  problem.build = [](Tape&, const std::vector<DiffTensor>& leaves) {
    auto x = leaves[0];
    auto f = op::reduce_sum(op::mul(x, x));
    auto g = op::reduce_sum(op::scale(x, 3.0));
    return op::add(f, g);
  };
  auto report = grad_check(problem);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-6);

  Tape tape;
  auto xd = tape.leaf(x, true);
  auto y = op::add(op::reduce_sum(op::mul(xd, xd)), op::reduce_sum(op::scale(xd, 3.0)));
  tape.backward(y);
  for (std::int64_t i = 0; i < 4; ++i)
    CHECK(xd.grad()[static_cast<std::size_t>(i)] ==
          doctest::Approx(2.0 * x[i] + 3.0).epsilon(1e-12));
}

TEST_CASE("backward twice doubles every gradient") {
  Tape tape;
  auto x = tape.leaf(make(Shape{3}, {1, 2, 3}), true);
  auto w = tape.leaf(make(Shape{3}, {0.5, -1, 2}), true);
  auto y = op::reduce_sum(op::mul(op::mul(x, w), x));
  tape.backward(y);
  const std::vector<double> gx = x.grad();
  const std::vector<double> gw = w.grad();
  tape.backward(y);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(x.grad()[i] == 2.0 * gx[i]);
    CHECK(w.grad()[i] == 2.0 * gw[i]);
  }
  tape.zero_grad();
  tape.backward(y);
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == gx[i]);
}

TEST_CASE("reshape and transpose round-trip bit for bit") {
  Rng rng(9);
  Tensor x = random_uniform(Shape{3, 4, 5}, -10.0, 10.0, rng);
  Tape tape;
  auto xd = tape.constant(x);
  auto back = op::reshape(op::reshape(xd, Shape{60}), Shape{3, 4, 5});
  CHECK(back.values() == x.values);

  Tensor m = random_uniform(Shape{4, 7}, -10.0, 10.0, rng);
  auto md = tape.constant(m);
  auto mt = op::transpose2d(op::transpose2d(md));
  CHECK(mt.values() == m.values);

  auto bad = tape.constant(Tensor(Shape{4}, 0.0));
  CHECK_THROWS_AS(op::reshape(bad, Shape{5}), ShapeMismatch);
  CHECK_THROWS_AS(op::transpose2d(bad), ShapeMismatch);
}

TEST_CASE("grad_check harness") {
  SUBCASE("linear function has zero error") {
    Tensor x = make(Shape{4}, {1, 2, 3, 4});
    GradCheckProblem problem;
    problem.params = {{"x", &x}};
    problem.build = [](Tape&, const std::vector<DiffTensor>& leaves) {
      return op::reduce_sum(op::scale(leaves[0], 2.5));
    };
    auto report = grad_check(problem);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-9);
  }
  SUBCASE("quadratic in five params") {
    Rng rng(17);
    std::vector<Tensor> params;
    for (int i = 0; i < 5; ++i) params.push_back(random_uniform(Shape{2}, -1.0, 1.0, rng));
    GradCheckProblem problem;
    for (int i = 0; i < 5; ++i) problem.params.push_back({"p" + std::to_string(i), &params[i]});
    problem.build = [](Tape&, const std::vector<DiffTensor>& leaves) {
      auto acc = op::reduce_sum(op::mul(leaves[0], leaves[0]));
      for (std::size_t i = 1; i < leaves.size(); ++i)
        acc = op::add(acc, op::reduce_sum(op::mul(leaves[i], leaves[i])));
      return acc;
    };
    auto report = grad_check(problem);
    REQUIRE(report.entries.size() == 5);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-6);
  }
  SUBCASE("corrupted gradient is reported as fail") {
    Tensor x = make(Shape{3}, {1, 2, 3});
    GradCheckProblem problem;
    problem.params = {{"x", &x}};
    problem.build = [](Tape& tape, const std::vector<DiffTensor>& leaves) {
      auto xd = leaves[0];
      const auto& v = xd.values();
      double s = 0.0;
      for (double e : v) s += e;
      const int xi = xd.id;
      // Backward claims d(sum)/dx = 3, deliberately wrong.
      return tape.make_node("bad_sum", Shape{1}, {s}, {xd},
                            [xi](Tape& t, const std::vector<double>& dz, Adjoints& adj) {
                              if (auto* dx = t.adj_of(adj, xi))
                                for (double& g : *dx) g += 3.0 * dz[0];
                            });
    };
    auto report = grad_check(problem);
    CHECK_FALSE(report.pass);
    CHECK(report.entries[0].max_rel_err > 0.1);
  }
}

TEST_CASE("every differentiable op passes grad_check across seeds") {
  for (std::uint64_t seed : {101u, 202u, 303u}) {
    CHECK(fd_max_rel_err(Shape{3, 4}, [](DiffTensor x) { return op::relu(x); }, seed) < 1e-5);
    CHECK(fd_max_rel_err(Shape{3, 4}, [](DiffTensor x) { return op::exp(x); }, seed) < 1e-5);
    CHECK(fd_max_rel_err(Shape{2, 3}, [](DiffTensor x) { return op::scale(x, -1.75); }, seed) <
          1e-5);
    CHECK(fd_max_rel_err(Shape{10}, [](DiffTensor x) { return op::reduce_mean(x); }, seed) < 1e-5);
    CHECK(fd_max_rel_err(Shape{2, 3, 4},
                         [](DiffTensor x) { return op::reshape(x, Shape{6, 4}); }, seed) < 1e-5);
    CHECK(fd_max_rel_err(Shape{3, 5}, [](DiffTensor x) { return op::transpose2d(x); }, seed) <
          1e-5);
    CHECK(fd_max_rel_err(Shape{2, 6, 6}, [](DiffTensor x) { return op::maxpool2d(x, 2); }, seed) <
          1e-5);
    CHECK(fd_max_rel_err(Shape{1, 7, 5}, [](DiffTensor x) { return op::maxpool2d(x, 4); }, seed) <
          1e-5);
    CHECK(fd_max_rel_err(Shape{4, 4}, [](DiffTensor x) { return op::add(x, x); }, seed) < 1e-5);
    CHECK(fd_max_rel_err(Shape{4, 4}, [](DiffTensor x) { return op::sub(op::mul(x, x), x); },
                         seed) < 1e-5);
    CHECK(fd_max_rel_err(Shape{2, 2}, [](DiffTensor x) {
            return op::conv1x1(op::reshape(x, Shape{1, 2, 2}),
                               op::reshape(op::exp(x), Shape{4, 1}));
          }, seed) < 1e-5);
  }
}

TEST_CASE("detach blocks gradient flow") {
  Tape tape;
  auto x = tape.leaf(make(Shape{2}, {1.5, -0.5}), true);
  auto held = op::detach(op::mul(x, x));
  CHECK_FALSE(held.requires_grad());
  auto y = op::reduce_sum(op::add(op::mul(x, x), op::scale(held, 10.0)));
  tape.backward(y);
  CHECK(x.grad() == std::vector<double>{3.0, -1.0});
}
