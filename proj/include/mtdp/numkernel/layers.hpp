#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "mtdp/numkernel/ops.hpp"
#include "mtdp/numkernel/rng.hpp"
#include "mtdp/numkernel/tape.hpp"

namespace mtdp::nk {

/// Kaiming-normal initialization: i.i.d. N(0, 2 / fan_in).
template <typename Real>
Tensor<Real> kaiming_init(Shape shape, std::size_t fan_in, Stream& rng) {
  if (fan_in == 0) throw ConfigError("kaiming_init: fan_in must be > 0");
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  Tensor<Real> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<Real>(std * rng.normal());
  return t;
}

/// y = x W + b with W stored (in, out).
template <typename Real>
class Linear {
 public:
  Linear() = default;
  Linear(ParamSet<Real>& params, const std::string& name, std::size_t in, std::size_t out, Stream& rng,
         bool with_bias = true)
      : in_(in), out_(out) {
    weight_ = &params.add(name + ".weight", kaiming_init<Real>({in, out}, in, rng));
    if (with_bias) bias_ = &params.add(name + ".bias", Tensor<Real>({out}));
  }

  /// Wraps existing parameters (e.g. loaded from a checkpoint).
  static Linear bind(Parameter<Real>& weight, Parameter<Real>* bias) {
    Linear l;
    l.in_ = weight.value.shape().at(0);
    l.out_ = weight.value.shape().at(1);
    l.weight_ = &weight;
    l.bias_ = bias;
    return l;
  }

  Var<Real> operator()(Tape<Real>& tape, const Var<Real>& x) const {
    std::optional<Var<Real>> b;
    if (bias_) b = tape.param(*bias_);
    return linear(x, tape.param(*weight_), b);
  }

  Parameter<Real>& weight() const { return *weight_; }
  Parameter<Real>* bias() const { return bias_; }
  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  Parameter<Real>* weight_ = nullptr;
  Parameter<Real>* bias_ = nullptr;
};

template <typename Real>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamSet<Real>& params, const std::string& name, std::size_t dim) {
    gamma_ = &params.add(name + ".gamma", Tensor<Real>({dim}, Real(1)));
    beta_ = &params.add(name + ".beta", Tensor<Real>({dim}));
  }

  Var<Real> operator()(Tape<Real>& tape, const Var<Real>& x) const {
    return layer_norm(x, tape.param(*gamma_), tape.param(*beta_));
  }

 private:
  Parameter<Real>* gamma_ = nullptr;
  Parameter<Real>* beta_ = nullptr;
};

}  // namespace mtdp::nk
