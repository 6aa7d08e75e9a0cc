#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "micromotion/types.hpp"

namespace micromotion {

/// First/second moment accumulators mirroring a flat parameter vector.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam update, no weight decay.
template <class S>
void adam_step(std::span<S> params, std::span<const double> grads, AdamState& state, double lr) {
  detail::require(params.size() == grads.size() && state.m.size() == params.size() &&
                      state.v.size() == params.size(),
                  "Adam buffers must match the parameter count");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double update = lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + state.epsilon);
    if (update != 0.0) params[i] = static_cast<S>(static_cast<double>(params[i]) - update);
  }
}

}  // namespace micromotion
