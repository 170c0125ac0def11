#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mtdp/numkernel/tape.hpp"

namespace mtdp::nk {

struct OptimizerConfig {
  double lr_max = 5e-4;
  double lr_min = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-2;
  double clip_norm = 1.0;
  std::uint64_t total_steps = 1;

  void validate() const {
    if (!(lr_min > 0.0 && lr_min <= lr_max)) throw ConfigError("optimizer: require 0 < lr_min <= lr_max");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("optimizer: betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("optimizer: eps must be > 0");
    if (!(clip_norm > 0.0)) throw ConfigError("optimizer: clip_norm must be > 0");
    if (weight_decay < 0.0) throw ConfigError("optimizer: weight_decay must be >= 0");
    if (total_steps == 0) throw ConfigError("optimizer: total_steps must be >= 1");
  }
};

/// lr_min + (lr_max - lr_min)(1 + cos(pi step / total)) / 2; clamps to lr_min past the end.
inline double cosine_annealing_lr(std::uint64_t step, const OptimizerConfig& cfg) {
  if (step >= cfg.total_steps) return cfg.lr_min;
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(phase));
}

/// One AdamW update with decoupled weight decay (PyTorch semantics).
template <typename Real>
void adamw_step(Parameter<Real>& p, const OptimizerConfig& cfg, double lr) {
  if (!(lr > 0.0)) throw ConfigError("adamw_step: lr must be > 0");
  if (!p.grad.all_finite()) {
    throw NumericalError("non-finite gradient in parameter '" + p.name + "'",
                         static_cast<std::int64_t>(p.step_count));
  }
  p.step_count += 1;
  const double t = static_cast<double>(p.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const Real decay = static_cast<Real>(1.0 - lr * cfg.weight_decay);
  const Real b1 = static_cast<Real>(cfg.beta1), b2 = static_cast<Real>(cfg.beta2);
  const Real step_size = static_cast<Real>(lr / bc1);
  const Real inv_sqrt_bc2 = static_cast<Real>(1.0 / std::sqrt(bc2));
  const Real eps = static_cast<Real>(cfg.eps);
  Real* w = p.value.data();
  Real* m = p.adam_m.data();
  Real* v = p.adam_v.data();
  const Real* g = p.grad.data();
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    w[i] *= decay;
    m[i] = b1 * m[i] + (Real(1) - b1) * g[i];
    v[i] = b2 * v[i] + (Real(1) - b2) * g[i] * g[i];
    w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
  }
}

/// Global L2 norm of all gradients.
template <typename Real>
double global_grad_norm(std::span<Parameter<Real>* const> params) {
  double acc = 0.0;
  for (const auto* p : params)
    for (Real g : p->grad.values()) acc += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(acc);
}

/// Scales every gradient by max_norm / norm when the global norm exceeds
/// max_norm. Returns the pre-clip norm.
template <typename Real>
double clip_grad_norm(std::span<Parameter<Real>* const> params, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_grad_norm: max_norm must be > 0");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const Real s = static_cast<Real>(max_norm / norm);
    for (auto* p : params)
      for (Real& g : p->grad.values()) g *= s;
  }
  return norm;
}

/// AdamW over a fixed parameter list with gradient clipping.
template <typename Real>
class AdamW {
 public:
  AdamW(std::vector<Parameter<Real>*> params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  // Clips, then applies one update at `lr`. Returns the pre-clip norm.
  double step(double lr, std::int64_t step_index = -1) {
    const double norm = clip_grad_norm<Real>(params_, cfg_.clip_norm);
    if (!std::isfinite(norm)) throw NumericalError("non-finite gradient norm", step_index);
    for (auto* p : params_) adamw_step(*p, cfg_, lr);
    return norm;
  }

  const OptimizerConfig& config() const noexcept { return cfg_; }
  const std::vector<Parameter<Real>*>& params() const noexcept { return params_; }

 private:
  std::vector<Parameter<Real>*> params_;
  OptimizerConfig cfg_;
};

}  // namespace mtdp::nk
