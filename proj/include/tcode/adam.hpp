#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tcode/errors.hpp"
#include "tcode/tensor.hpp"

namespace tcode {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

/// Bias-corrected Adam with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
/// Reads gradients from each parameter's grad buffer. `learning_rate` overrides
/// the configured rate for this step (used by schedules) when positive.
inline void adam_step(AdamState& state, std::span<Tensor* const> params, double learning_rate = -1.0) {
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam state tracks " + std::to_string(state.first_moment.size()) + " tensors, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != state.first_moment[i].shape()) {
      throw DimensionError("adam moment shape mismatch for parameter " + std::to_string(i));
    }
    if (!params[i]->has_grad()) continue;
    for (double g : std::as_const(*params[i]).grad()) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient in parameter " + std::to_string(i) + "; training aborted");
      }
    }
  }

  const AdamConfig& c = state.config;
  const double lr = learning_rate > 0.0 ? learning_rate : c.learning_rate;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (!p.has_grad()) continue;
    auto g = std::as_const(p).grad();
    auto w = p.data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      w[k] -= lr * (m_hat / (std::sqrt(v_hat) + c.epsilon) + c.weight_decay * w[k]);
    }
  }
}

}  // namespace tcode
