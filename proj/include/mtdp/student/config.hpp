#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mtdp::student {

struct StudentConfig {
  std::uint32_t channels = 4;
  std::uint32_t timesteps = 400;
  std::uint32_t patch_len = 40;
  std::uint32_t d_model = 64;
  std::uint32_t n_layers = 4;
  std::uint32_t spatial_heads = 2;
  std::uint32_t temporal_heads = 2;
  std::uint32_t ffn_dim = 256;
  float dropout = 0.0f;
  /// Positional conv kernel over (channel, patch); 0 picks the largest odd
  /// size not above the grid extent.
  std::uint32_t pos_kernel_c = 0;
  std::uint32_t pos_kernel_n = 0;
  bool use_positional = true;

  /// C=16, T=6000, P=200, d=200, 12 layers, 4+4 heads, ffn 800, kernel (19, 7).
  static StudentConfig full_scale();

  std::uint32_t n_patches() const { return timesteps / patch_len; }
  std::uint32_t n_heads() const { return spatial_heads + temporal_heads; }
  std::uint32_t head_dim() const { return d_model / n_heads(); }
  std::uint32_t spatial_width() const { return spatial_heads * head_dim(); }
  std::uint32_t temporal_width() const { return temporal_heads * head_dim(); }
  std::uint32_t freq_bins() const { return patch_len / 2 + 1; }

  // Time-domain patch convolution: three layers, d/8 channels, the first with
  // stride P/8 and kernel ≈ 49·P/200 rounded to odd, so each patch yields 8
  // positions and d/8 × 8 = d features.
  std::uint32_t conv_channels() const { return d_model / 8; }
  std::uint32_t conv_kernel() const;
  std::uint32_t conv_stride() const { return patch_len / 8; }
  std::uint32_t conv_pad() const { return (conv_kernel() - 1) / 2; }
  std::uint32_t resolved_pos_kernel_c() const;
  std::uint32_t resolved_pos_kernel_n() const;

  /// Every violated constraint, one message each.
  std::vector<std::string> violations() const;
  /// Throws ConfigError listing all violations.
  void validate() const;

  friend bool operator==(const StudentConfig&, const StudentConfig&) = default;
};

}  // namespace mtdp::student
