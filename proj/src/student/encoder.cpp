#include "mtdp/student/encoder.hpp"

namespace mtdp::student {

using nk::Tensor;

template <typename Real>
Encoder<Real>::Encoder(const StudentConfig& cfg, nk::Stream init_rng) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.d_model, cc = cfg_.conv_channels();
  const std::size_t kernels[3] = {cfg_.conv_kernel(), 3, 3};
  const std::size_t cins[3] = {1, cc, cc};
  for (int i = 0; i < 3; ++i) {
    const std::string name = "time.conv" + std::to_string(i);
    nk::Stream rng = init_rng.split(name);
    conv_w_[i] = &params_.add(name + ".weight",
                              nk::kaiming_init<Real>({cc, cins[i], kernels[i]}, cins[i] * kernels[i], rng));
    conv_b_[i] = &params_.add(name + ".bias", Tensor<Real>({cc}));
  }
  {
    nk::Stream rng = init_rng.split("freq");
    freq_ = nk::Linear<Real>(params_, "freq.proj", cfg_.freq_bins(), d, rng);
  }
  if (cfg_.use_positional) {
    const std::size_t kh = cfg_.resolved_pos_kernel_c(), kw = cfg_.resolved_pos_kernel_n();
    nk::Stream rng = init_rng.split("pos");
    pos_w_ = &params_.add("pos.weight", nk::kaiming_init<Real>({kh, kw, d}, kh * kw, rng));
    pos_b_ = &params_.add("pos.bias", Tensor<Real>({d}));
  }
  const std::size_t ws = cfg_.spatial_width(), wt = cfg_.temporal_width();
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "block" + std::to_string(l);
    nk::Stream rng = init_rng.split(p);
    Block b;
    b.ln1 = nk::LayerNorm<Real>(params_, p + ".ln1", d);
    b.s_in = nk::Linear<Real>(params_, p + ".spatial.in", ws, 3 * ws, rng);
    b.s_out = nk::Linear<Real>(params_, p + ".spatial.out", ws, ws, rng);
    b.t_in = nk::Linear<Real>(params_, p + ".temporal.in", wt, 3 * wt, rng);
    b.t_out = nk::Linear<Real>(params_, p + ".temporal.out", wt, wt, rng);
    b.ln2 = nk::LayerNorm<Real>(params_, p + ".ln2", d);
    b.ff1 = nk::Linear<Real>(params_, p + ".ffn.fc1", d, cfg_.ffn_dim, rng);
    b.ff2 = nk::Linear<Real>(params_, p + ".ffn.fc2", cfg_.ffn_dim, d, rng);
    blocks_.push_back(b);
  }
}

template <typename Real>
typename Encoder<Real>::Var Encoder<Real>::maybe_dropout(const Var& x, nk::Stream* rng) const {
  if (cfg_.dropout <= 0.0f || rng == nullptr) return x;
  return nk::dropout(x, static_cast<Real>(cfg_.dropout), *rng);
}

template <typename Real>
typename Encoder<Real>::Var Encoder<Real>::time_patch_encode(Tape& tape, const Var& x) const {
  const auto& s = x.shape();
  if (s.size() != 3 || s[1] != cfg_.channels || s[2] != cfg_.timesteps) {
    throw ShapeError("student: input " + nk::to_string(s) + " does not match (B, " + std::to_string(cfg_.channels) +
                         ", " + std::to_string(cfg_.timesteps) + ")");
  }
  const std::size_t B = s[0], C = cfg_.channels, Np = cfg_.n_patches(), P = cfg_.patch_len;
  Var h = nk::reshape(x, {B * C * Np, 1, P});
  h = nk::gelu(nk::conv1d(h, tape.param(*conv_w_[0]), tape.param(*conv_b_[0]), cfg_.conv_stride(), cfg_.conv_pad()));
  h = nk::gelu(nk::conv1d(h, tape.param(*conv_w_[1]), tape.param(*conv_b_[1]), 1, 1));
  h = nk::gelu(nk::conv1d(h, tape.param(*conv_w_[2]), tape.param(*conv_b_[2]), 1, 1));
  // (M, d/8, 8) flattened channel-major into d features per patch.
  return nk::reshape(h, {B, C, Np, std::size_t(cfg_.d_model)});
}

template <typename Real>
typename Encoder<Real>::Var Encoder<Real>::freq_patch_encode(Tape& tape, const Var& x) const {
  const std::size_t B = x.shape()[0], C = cfg_.channels, Np = cfg_.n_patches();
  Var patches = nk::reshape(x, {B, C, Np, std::size_t(cfg_.patch_len)});
  return freq_(tape, nk::rfft_magnitude(patches));
}

template <typename Real>
typename Encoder<Real>::Var Encoder<Real>::positional_encode(Tape& tape, const Var& grid) const {
  if (!pos_w_) return grid;
  return nk::add(grid, nk::depthwise_conv2d(grid, tape.param(*pos_w_), tape.param(*pos_b_)));
}

template <typename Real>
typename Encoder<Real>::Var Encoder<Real>::block(Tape& tape, std::size_t layer, const Var& grid,
                                                 nk::Stream* dropout_rng, std::vector<Real>* spatial_probs) const {
  const Block& b = blocks_.at(layer);
  const std::size_t ws = cfg_.spatial_width(), wt = cfg_.temporal_width();
  Var y = b.ln1(tape, grid);
  Var s = nk::axis_attention(b.s_in(tape, nk::slice_last(y, 0, ws)), cfg_.spatial_heads, nk::AttentionAxis::Spatial,
                             spatial_probs);
  Var t = nk::axis_attention(b.t_in(tape, nk::slice_last(y, ws, wt)), cfg_.temporal_heads,
                             nk::AttentionAxis::Temporal);
  Var attn = nk::concat_last<Real>({b.s_out(tape, s), b.t_out(tape, t)});
  Var h = nk::add(grid, maybe_dropout(attn, dropout_rng));
  Var ff = b.ff2(tape, maybe_dropout(nk::gelu(b.ff1(tape, b.ln2(tape, h))), dropout_rng));
  return nk::add(h, maybe_dropout(ff, dropout_rng));
}

template <typename Real>
typename Encoder<Real>::Var Encoder<Real>::encode(Tape& tape, const Var& x, nk::Stream* dropout_rng) const {
  Var grid = nk::add(time_patch_encode(tape, x), freq_patch_encode(tape, x));
  grid = positional_encode(tape, grid);
  for (std::size_t l = 0; l < blocks_.size(); ++l) grid = block(tape, l, grid, dropout_rng);
  return grid;
}

template <typename Real>
Tensor<Real> Encoder<Real>::embed(const Tensor<Real>& x) const {
  Tape tape;
  tape.set_grad_enabled(false);
  return pool(encode(tape, tape.constant(x))).value();
}

template <typename Real>
Tensor<Real> Encoder<Real>::embed_grid(const Tensor<Real>& x) const {
  Tape tape;
  tape.set_grad_enabled(false);
  return encode(tape, tape.constant(x)).value();
}

template class Encoder<float>;
template class Encoder<double>;

}  // namespace mtdp::student
