#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace furnace {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment accumulators for one flat parameter vector.
struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step_count = 0;
  AdamConfig cfg;

  explicit AdamState(std::size_t n, AdamConfig config = {})
      : first_moment(n, 0.0), second_moment(n, 0.0), cfg(config) {}
};

/// Standard bias-corrected Adam update, in place.
inline void adam_step(std::vector<double>& params, std::span<const double> grads,
                      AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam_step: size mismatch");
  }
  assert(state.step_count < std::numeric_limits<std::int64_t>::max());
  state.step_count += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.first_moment[i] = b1 * state.first_moment[i] + (1.0 - b1) * g;
    state.second_moment[i] = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
    const double m_hat = state.first_moment[i] / bias1;
    const double v_hat = state.second_moment[i] / bias2;
    params[i] -= state.cfg.lr * m_hat / (std::sqrt(v_hat) + state.cfg.eps);
  }
}

}  // namespace furnace
