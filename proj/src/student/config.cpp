#include "mtdp/student/config.hpp"

#include <cmath>

#include "mtdp/numkernel/error.hpp"

namespace mtdp::student {

namespace {

std::uint32_t largest_odd_at_most(std::uint32_t n) {
  std::uint32_t k = n;
  if (k % 2 == 0) --k;
  return std::max<std::uint32_t>(k, 1);
}

}  // namespace

StudentConfig StudentConfig::full_scale() {
  StudentConfig c;
  c.channels = 16;
  c.timesteps = 6000;
  c.patch_len = 200;
  c.d_model = 200;
  c.n_layers = 12;
  c.spatial_heads = 4;
  c.temporal_heads = 4;
  c.ffn_dim = 800;
  c.pos_kernel_c = 19;
  c.pos_kernel_n = 7;
  return c;
}

std::uint32_t StudentConfig::conv_kernel() const {
  const double scaled = 49.0 * patch_len / 200.0;
  // Nearest odd integer, at least 1.
  const auto k = static_cast<std::uint32_t>(std::lround((scaled - 1.0) / 2.0)) * 2 + 1;
  return std::max<std::uint32_t>(k, 1);
}

std::uint32_t StudentConfig::resolved_pos_kernel_c() const {
  return pos_kernel_c ? pos_kernel_c : largest_odd_at_most(channels);
}

std::uint32_t StudentConfig::resolved_pos_kernel_n() const {
  return pos_kernel_n ? pos_kernel_n : largest_odd_at_most(n_patches());
}

std::vector<std::string> StudentConfig::violations() const {
  std::vector<std::string> v;
  if (channels < 1) v.push_back("student.channels must be >= 1");
  if (patch_len < 8 || patch_len % 8 != 0) v.push_back("student.patch_len must be a positive multiple of 8");
  if (patch_len == 0 || timesteps % patch_len != 0 || timesteps < patch_len) {
    v.push_back("T not divisible by P: student.timesteps (" + std::to_string(timesteps) +
                ") must be a positive multiple of patch_len (" + std::to_string(patch_len) + ")");
  }
  if (d_model < 8 || d_model % 8 != 0) v.push_back("student.d_model must be a positive multiple of 8");
  if (n_layers < 1) v.push_back("student.n_layers must be >= 1");
  if (spatial_heads < 1 || temporal_heads < 1) v.push_back("student needs at least one spatial and one temporal head");
  if (n_heads() > 0 && d_model % n_heads() != 0) {
    v.push_back("student.d_model (" + std::to_string(d_model) + ") must be divisible by spatial_heads + temporal_heads (" +
                std::to_string(n_heads()) + ")");
  }
  if (ffn_dim < 1) v.push_back("student.ffn_dim must be >= 1");
  if (!(dropout >= 0.0f && dropout < 1.0f)) v.push_back("student.dropout must lie in [0, 1)");
  if ((pos_kernel_c && pos_kernel_c % 2 == 0) || (pos_kernel_n && pos_kernel_n % 2 == 0)) {
    v.push_back("student positional kernel sizes must be odd");
  }
  return v;
}

void StudentConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid student config:";
  for (const auto& s : v) msg += "\n  " + s;
  throw ConfigError(msg);
}

}  // namespace mtdp::student
