#include "cankd/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "cankd/errors.hpp"

namespace cankd {

namespace {

double eval_scalar(const GradCheckProblem& problem) {
  Tape tape;
  std::vector<DiffTensor> leaves;
  leaves.reserve(problem.params.size());
  for (const auto& p : problem.params) leaves.push_back(tape.leaf(*p.tensor, true));
  DiffTensor out = problem.build(tape, leaves);
  return out.values()[0];
}

}  // namespace

GradCheckReport grad_check(const GradCheckProblem& problem, double step, double tolerance) {
  GradCheckReport report;

  // One reverse sweep gives every analytic gradient at once.
  Tape tape;
  std::vector<DiffTensor> leaves;
  leaves.reserve(problem.params.size());
  for (const auto& p : problem.params) leaves.push_back(tape.leaf(*p.tensor, true));
  DiffTensor out = problem.build(tape, leaves);
  tape.backward(out);

  for (std::size_t pi = 0; pi < problem.params.size(); ++pi) {
    const auto& param = problem.params[pi];
    const Tensor analytic = tape.grad_tensor(leaves[pi]);

    GradCheckEntry entry;
    entry.name = param.name;
    entry.pass = true;

    std::vector<double>& vals = param.tensor->values;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + step;
      const double f_plus = eval_scalar(problem);
      vals[i] = saved - step;
      const double f_minus = eval_scalar(problem);
      vals[i] = saved;

      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double a = analytic.values[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }

    entry.pass = entry.max_rel_err <= tolerance;
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace cankd
