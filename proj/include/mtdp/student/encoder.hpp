#pragma once

#include <vector>

#include "mtdp/numkernel/layers.hpp"
#include "mtdp/student/config.hpp"

namespace mtdp::student {

/// Patch encoders, convolutional positional encoder and a stack of
/// criss-cross transformer blocks. Inputs are (B, C, T); token grids are
/// (B, C, Np, d_model).
template <typename Real>
class Encoder {
 public:
  using Var = nk::Var<Real>;
  using Tape = nk::Tape<Real>;

  Encoder(const StudentConfig& cfg, nk::Stream init_rng);
  Encoder(const Encoder&) = delete;
  Encoder& operator=(const Encoder&) = delete;

  const StudentConfig& config() const { return cfg_; }
  nk::ParamSet<Real>& params() { return params_; }
  const nk::ParamSet<Real>& params() const { return params_; }

  /// `dropout_rng` may be null when dropout is zero or in eval mode.
  Var encode(Tape& tape, const Var& x, nk::Stream* dropout_rng = nullptr) const;
  Var pool(const Var& grid) const { return nk::mean_tokens(grid); }

  Var time_patch_encode(Tape& tape, const Var& x) const;
  Var freq_patch_encode(Tape& tape, const Var& x) const;
  Var positional_encode(Tape& tape, const Var& grid) const;
  /// `spatial_probs`, if given, receives the spatial attention rows.
  Var block(Tape& tape, std::size_t layer, const Var& grid, nk::Stream* dropout_rng = nullptr,
            std::vector<Real>* spatial_probs = nullptr) const;

  /// Pooled representations (B, d_model) without recording gradients.
  nk::Tensor<Real> embed(const nk::Tensor<Real>& x) const;
  /// Token grids (B, C, Np, d_model) without recording gradients.
  nk::Tensor<Real> embed_grid(const nk::Tensor<Real>& x) const;

 private:
  struct Block {
    nk::LayerNorm<Real> ln1, ln2;
    nk::Linear<Real> s_in, s_out, t_in, t_out, ff1, ff2;
  };

  Var maybe_dropout(const Var& x, nk::Stream* rng) const;

  StudentConfig cfg_;
  nk::ParamSet<Real> params_;
  nk::Parameter<Real>*conv_w_[3], *conv_b_[3];
  nk::Linear<Real> freq_;
  nk::Parameter<Real>*pos_w_ = nullptr, *pos_b_ = nullptr;
  std::vector<Block> blocks_;
};

extern template class Encoder<float>;
extern template class Encoder<double>;

/// Copies parameter values between sets with identical names and shapes
/// (e.g. an f32 training copy into an f64 verification copy).
template <typename To, typename From>
void copy_param_values(const nk::ParamSet<From>& from, nk::ParamSet<To>& to) {
  for (auto* p : from.all()) to.at(p->name).value = p->value.template cast<To>();
}

}  // namespace mtdp::student
