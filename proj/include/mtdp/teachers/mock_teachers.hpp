#pragma once

#include <utility>
#include <vector>

#include "mtdp/teachers/adapters.hpp"

namespace mtdp::teach {

struct Band {
  double lo_hz, hi_hz;  // [lo, hi)
};

/// Classic EEG bands: delta, theta, alpha, beta.
std::vector<Band> default_bands();

/// Per-channel log band powers, concatenated channel-major and projected to
/// `dim` by a fixed seeded Gaussian matrix. Band power is the mean periodogram
/// value |X_k|² / T² over the DFT bins whose frequency lies in the band.
class SpectralTeacher final : public Teacher {
 public:
  SpectralTeacher(std::string name, std::uint32_t channels, std::uint32_t timesteps, float fs, std::vector<Band> bands,
                  std::uint32_t dim, std::uint64_t seed, double log_floor = 1e-4);

  const std::string& name() const override { return name_; }
  std::uint32_t dim() const override { return dim_; }
  std::vector<float> embed(const data::EegSegment& x, const std::string& sample_id) const override;

  /// The unprojected C×B log band-power features. embed() layer-normalizes
  /// these across features before the projection.
  std::vector<double> log_band_powers(const data::EegSegment& x) const;

 private:
  std::string name_;
  std::uint32_t channels_, timesteps_;
  float fs_;
  std::vector<Band> bands_;
  std::uint32_t dim_;
  double log_floor_;
  std::vector<std::vector<std::size_t>> band_bins_;
  std::vector<double> cos_, sin_;  // (bins used, T) twiddles, rows in band_bins_ order
  std::vector<double> proj_;       // (dim, C·B)
};

/// A control teacher carrying no information about the signal: each vector is
/// drawn from N(0, scale²) by a stream keyed on (seed, sample id) only.
class NoiseTeacher final : public Teacher {
 public:
  NoiseTeacher(std::string name, std::uint32_t dim, std::uint64_t seed, double scale = 1.0);

  const std::string& name() const override { return name_; }
  std::uint32_t dim() const override { return dim_; }
  std::vector<float> embed(const data::EegSegment& x, const std::string& sample_id) const override;

 private:
  std::string name_;
  std::uint32_t dim_;
  std::uint64_t seed_;
  double scale_;
};

}  // namespace mtdp::teach
