#include <cmath>

#include "headprune/autodiff.hpp"
#include "headprune/kernels.hpp"

namespace headprune::ad {

AdamState AdamState::for_parameters(std::span<Parameter* const> params, AdamConfig hyper) {
  AdamState state;
  state.hyper = hyper;
  for (const Parameter* p : params) {
    state.first_moment.emplace_back(p->value.size(), 0.0);
    state.second_moment.emplace_back(p->value.size(), 0.0);
  }
  return state;
}

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.grad.size() != p.value.size() || state.first_moment[i].size() != p.value.size() ||
        state.second_moment[i].size() != p.value.size())
      throw ShapeError("adam_step: shape mismatch for parameter '" + p.name + "' " +
                       shape_string(p.value.shape));
  }
  ++state.step_count;
  const AdamConfig& h = state.hyper;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(h.beta1, t);
  const double bias2 = 1.0 - std::pow(h.beta2, t);
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    k.adam(p.value.data.data(), p.grad.data(), state.first_moment[i].data(),
           state.second_moment[i].data(), p.value.size(), h.lr, h.beta1, h.beta2, h.eps, bias1, bias2);
  }
}

}  // namespace headprune::ad
