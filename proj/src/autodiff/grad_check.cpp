#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "headprune/autodiff.hpp"

namespace headprune::ad {
namespace {

double evaluate(const LossBuilder& build) {
  Tape tape;
  Var loss = build(tape);
  if (loss.value().size() != 1) throw ShapeError("grad_check: loss must be scalar");
  return loss.value().data[0];
}

}  // namespace

GradCheckReport grad_check(std::span<Parameter* const> params, const LossBuilder& build,
                           const GradCheckOptions& options) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = build(tape);
    const double first = loss.value().data.at(0);
    tape.backward(loss);
    if (evaluate(build) != first)
      throw std::runtime_error("grad_check: forward pass is not deterministic");
  }

  GradCheckReport report;
  report.passed = true;
  const double h = options.step;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data[i];
      const double saved = x;
      x = saved + h;
      const double up = evaluate(build);
      x = saved - h;
      const double down = evaluate(build);
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel > report.worst_rel_error || report.worst_parameter.empty()) {
        report.worst_rel_error = rel;
        report.worst_parameter = p->name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.worst_rel_error <= options.tolerance;
  return report;
}

}  // namespace headprune::ad
