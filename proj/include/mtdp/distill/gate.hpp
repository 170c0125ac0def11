#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mtdp/dataio/binio.hpp"
#include "mtdp/numkernel/layers.hpp"

namespace mtdp::distill {

struct GateConfig {
  /// Registry order; fusion requires every d_k to equal d_fuse.
  std::vector<std::string> teachers;
  std::vector<std::uint32_t> dims;
  std::uint32_t hidden = 0;  // 0 means d_fuse

  std::uint32_t d_fuse() const { return dims.empty() ? 0 : dims.front(); }
  std::uint32_t resolved_hidden() const { return hidden ? hidden : d_fuse(); }
  std::size_t k() const { return teachers.size(); }
  std::vector<std::string> violations() const;
  void validate() const;

  friend bool operator==(const GateConfig&, const GateConfig&) = default;
};

/// Gating MLP ψ (Σd_k → hidden → K, ReLU, softmax) plus one linear
/// prediction head per teacher (d_fuse → d_k).
template <typename Real>
class Gate {
 public:
  using Var = nk::Var<Real>;
  using Tape = nk::Tape<Real>;

  /// `zero_output` initializes the final gate layer to zero so w starts uniform.
  Gate(const GateConfig& cfg, nk::Stream init_rng, bool zero_output = false);
  Gate(const Gate&) = delete;
  Gate& operator=(const Gate&) = delete;

  const GateConfig& config() const { return cfg_; }
  nk::ParamSet<Real>& params() { return params_; }
  const nk::ParamSet<Real>& params() const { return params_; }

  /// reps: K tensors (B, d_k) in registry order → w (B, K).
  Var weights(Tape& tape, const std::vector<Var>& reps) const;
  /// Σ_k w_k h_k → (B, d_fuse).
  Var fuse(const Var& w, const std::vector<Var>& reps) const;
  /// Σ_k ‖p_k(Σ_j w_j h̃_j) − h_k‖², mean over the batch, w = gate(h̃).
  Var denoise_loss(Tape& tape, const std::vector<Var>& masked, const std::vector<Var>& clean) const;
  Var head(Tape& tape, std::size_t k, const Var& fused) const { return heads_.at(k)(tape, fused); }

  /// Inference helpers over plain row-major batches.
  nk::Tensor<Real> weights_of(const std::vector<nk::Tensor<Real>>& reps) const;
  nk::Tensor<Real> fused_of(const std::vector<nk::Tensor<Real>>& reps) const;

 private:
  void check_reps(const std::vector<Var>& reps) const;

  GateConfig cfg_;
  nk::ParamSet<Real> params_;
  nk::Linear<Real> fc1_, fc2_;
  std::vector<nk::Linear<Real>> heads_;
};

extern template class Gate<float>;
extern template class Gate<double>;

inline constexpr std::uint32_t kGateCheckpointVersion = 1;

std::vector<std::uint8_t> encode_gate(const Gate<float>& gate);
std::unique_ptr<Gate<float>> decode_gate(std::span<const std::uint8_t> bytes,
                                         const std::string& context = "gate checkpoint");
void save_gate(const Gate<float>& gate, const std::filesystem::path& path);
std::unique_ptr<Gate<float>> load_gate(const std::filesystem::path& path);

}  // namespace mtdp::distill
