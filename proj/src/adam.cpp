// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "mpolstm/error.hpp"
#include "mpolstm/training.hpp"

namespace mpolstm {

AdamState::AdamState(AdamConfig cfg, std::span<const std::size_t> tensor_sizes) : config(cfg) {
  for (std::size_t n : tensor_sizes) {
    m.emplace_back(n, 0.0);
    v.emplace_back(n, 0.0);
  }
}

void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads) {
  if (params.size() != state.m.size() || grads.size() != state.m.size()) {
    throw ExtentError("adam_step: tensor count does not match optimizer state");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != state.m[k].size() || grads[k].size() != state.m[k].size()) {
      throw ExtentError("adam_step: tensor " + std::to_string(k) + " has the wrong size");
    }
    if (!all_finite(grads[k])) throw NumericError("adam_step: non-finite gradient");
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t e = 0; e < m.size(); ++e) {
      const double g = grads[k][e];
      m[e] = c.beta1 * m[e] + (1.0 - c.beta1) * g;
      v[e] = c.beta2 * v[e] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[e] / correction1;
      const double v_hat = v[e] / correction2;
      params[k][e] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

double clip_global_norm(std::span<const std::span<double>> grads, double max_norm) {
  double sq = 0.0;
  for (auto g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto g : grads)
      for (double& x : g) x *= scale;
  }
  return norm;
}

}  // namespace mpolstm
