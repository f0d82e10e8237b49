#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cankd/tape.hpp"
#include "cankd/tensor.hpp"

namespace cankd {

// A differentiable scalar function of named parameters, stated in a form the
// finite-difference checker can re-evaluate after perturbing any entry.
// `build` must register every parameter on the tape (requires_grad = true, in
// order) and return the scalar output node.
struct GradCheckProblem {
  ParamRefs params;
  std::function<DiffTensor(Tape&, const std::vector<DiffTensor>&)> build;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool pass = true;
  double max_rel_err = 0.0;
};

// Compares reverse-mode gradients against central differences
// (f(p+h) - f(p-h)) / 2h evaluated per parameter entry. Relative error uses
// max(|analytic|, |numeric|, 1e-8) as the denominator.
GradCheckReport grad_check(const GradCheckProblem& problem, double step = 1e-5,
                           double tolerance = 1e-5);

}  // namespace cankd
