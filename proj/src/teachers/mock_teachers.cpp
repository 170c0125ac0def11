#include "mtdp/teachers/mock_teachers.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mtdp/numkernel/rng.hpp"

namespace mtdp::teach {

std::vector<Band> default_bands() { return {{1.0, 4.0}, {4.0, 8.0}, {8.0, 13.0}, {13.0, 30.0}}; }

SpectralTeacher::SpectralTeacher(std::string name, std::uint32_t channels, std::uint32_t timesteps, float fs,
                                 std::vector<Band> bands, std::uint32_t dim, std::uint64_t seed, double log_floor)
    : name_(std::move(name)),
      channels_(channels),
      timesteps_(timesteps),
      fs_(fs),
      bands_(std::move(bands)),
      dim_(dim),
      log_floor_(log_floor) {
  if (channels == 0 || timesteps < 2 || dim == 0 || bands_.empty()) {
    throw std::invalid_argument("spectral teacher: need C >= 1, T >= 2, dim >= 1 and at least one band");
  }
  if (!(log_floor > 0)) throw std::invalid_argument("spectral teacher: log_floor must be > 0");
  const double nyquist = fs / 2.0;
  for (const auto& b : bands_) {
    if (!(b.lo_hz >= 0.0) || !(b.hi_hz > b.lo_hz) || b.hi_hz > nyquist) {
      throw std::invalid_argument("spectral teacher " + name_ + ": band [" + std::to_string(b.lo_hz) + ", " +
                                  std::to_string(b.hi_hz) + ") lies outside [0, Nyquist = " + std::to_string(nyquist) +
                                  "]");
    }
    std::vector<std::size_t> bins;
    for (std::size_t k = 0; k <= timesteps / 2; ++k) {
      const double f = static_cast<double>(k) * fs / timesteps;
      if (f >= b.lo_hz && f < b.hi_hz) bins.push_back(k);
    }
    if (bins.empty()) throw std::invalid_argument("spectral teacher " + name_ + ": band contains no DFT bin at this T");
    band_bins_.push_back(std::move(bins));
  }
  for (const auto& bins : band_bins_) {
    for (std::size_t k : bins) {
      for (std::size_t t = 0; t < timesteps; ++t) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>((k * t) % timesteps) / timesteps;
        cos_.push_back(std::cos(a));
        sin_.push_back(std::sin(a));
      }
    }
  }
  const std::size_t feats = std::size_t(channels) * bands_.size();
  proj_.resize(dim * feats);
  nk::Stream rng = nk::Stream(seed).split("spectral-projection");
  const double sd = 1.0 / std::sqrt(static_cast<double>(feats));
  for (auto& v : proj_) v = sd * rng.normal();
}

std::vector<double> SpectralTeacher::log_band_powers(const data::EegSegment& x) const {
  if (x.channels != channels_ || x.timesteps != timesteps_ || x.fs != fs_) {
    throw std::invalid_argument("spectral teacher " + name_ + ": segment shape or fs differs from construction");
  }
  const double norm = 1.0 / (static_cast<double>(timesteps_) * timesteps_);
  std::vector<double> feats;
  feats.reserve(channels_ * bands_.size());
  for (std::size_t c = 0; c < channels_; ++c) {
    const float* row = x.data.data() + c * timesteps_;
    std::size_t twiddle_row = 0;
    for (const auto& bins : band_bins_) {
      double power = 0;
      for (std::size_t j = 0; j < bins.size(); ++j, ++twiddle_row) {
        const double* cs = &cos_[twiddle_row * timesteps_];
        const double* sn = &sin_[twiddle_row * timesteps_];
        double re = 0, im = 0;
        for (std::size_t t = 0; t < timesteps_; ++t) {
          re += row[t] * cs[t];
          im -= row[t] * sn[t];
        }
        power += (re * re + im * im) * norm;
      }
      feats.push_back(std::log(power / static_cast<double>(bins.size()) + log_floor_));
    }
  }
  return feats;
}

std::vector<float> SpectralTeacher::embed(const data::EegSegment& x, const std::string&) const {
  auto feats = log_band_powers(x);
  // Per-sample layer norm, like the final norm of a pretrained encoder, so
  // embeddings are zero-centred and O(1) regardless of the signal level.
  double mean = 0, var = 0;
  for (double f : feats) mean += f / static_cast<double>(feats.size());
  for (double f : feats) var += (f - mean) * (f - mean) / static_cast<double>(feats.size());
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  for (double& f : feats) f = (f - mean) * inv;
  std::vector<float> out(dim_);
  for (std::size_t o = 0; o < dim_; ++o) {
    double s = 0;
    for (std::size_t i = 0; i < feats.size(); ++i) s += proj_[o * feats.size() + i] * feats[i];
    out[o] = static_cast<float>(s);
  }
  return out;
}

NoiseTeacher::NoiseTeacher(std::string name, std::uint32_t dim, std::uint64_t seed, double scale)
    : name_(std::move(name)), dim_(dim), seed_(seed), scale_(scale) {
  if (dim == 0) throw std::invalid_argument("noise teacher: dim must be >= 1");
  if (!(scale > 0)) throw std::invalid_argument("noise teacher: scale must be > 0");
}

std::vector<float> NoiseTeacher::embed(const data::EegSegment&, const std::string& sample_id) const {
  nk::Stream rng = nk::Stream(seed_).split("noise-teacher").split(sample_id);
  std::vector<float> out(dim_);
  for (auto& v : out) v = static_cast<float>(scale_ * rng.normal());
  return out;
}

}  // namespace mtdp::teach
