#include "mtdp/dataio/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "mtdp/dataio/preprocess.hpp"
#include "mtdp/numkernel/rng.hpp"

namespace mtdp::data {

namespace {

constexpr int kTonesPerBand = 3;
constexpr int kMaxRedraws = 1000;

// Unit-norm channel weights, one row per class, fixed by the seed.
std::vector<std::vector<double>> topographies(const SynthSpec& spec, nk::Stream rng) {
  std::vector<std::vector<double>> topo(static_cast<std::size_t>(spec.n_classes));
  for (auto& row : topo) {
    row.resize(spec.channels);
    double norm = 0;
    for (auto& v : row) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : row) v *= std::sqrt(static_cast<double>(spec.channels)) / norm;
  }
  return topo;
}

void add_band(std::vector<double>& x, const SynthSpec& spec, const std::vector<double>& topo, double lo, double hi,
              double rms, nk::Stream& rng) {
  const double nyquist = spec.fs / 2.0;
  // Each tone has variance amp^2/2; kTonesPerBand tones sum to rms^2.
  const double amp = rms * std::sqrt(2.0 / kTonesPerBand);
  for (int k = 0; k < kTonesPerBand; ++k) {
    const double f = std::min(lo + (hi - lo) * rng.uniform(), nyquist);
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    const double w = 2.0 * std::numbers::pi * f / spec.fs;
    for (std::size_t c = 0; c < spec.channels; ++c) {
      const double a = amp * topo[c];
      double* row = x.data() + c * spec.timesteps;
      for (std::size_t t = 0; t < spec.timesteps; ++t) row[t] += a * std::sin(w * static_cast<double>(t) + phase);
    }
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (channels < 1 || timesteps < 1 || !(fs > 0)) throw std::invalid_argument("synth: need C, T >= 1 and fs > 0");
  if (n_samples < 1) throw std::invalid_argument("synth: n_samples must be >= 1");
  if (n_classes < (labeled ? 2 : 1)) throw std::invalid_argument("synth: labeled mode requires n_classes >= 2");
  if (!(snr > 0)) throw std::invalid_argument("synth: snr must be > 0");
  if (!(signal_uV > 0) || distractor_uV < 0) throw std::invalid_argument("synth: amplitudes must be positive");
  if (!(f_lo > 0) || f_hi < f_lo || f_hi + bandwidth_hz / 2 > fs / 2) {
    throw std::invalid_argument("synth: class bands must lie inside (0, fs/2)");
  }
}

double class_center_hz(const SynthSpec& spec, int cls) {
  if (spec.n_classes == 1) return spec.f_lo;
  return spec.f_lo + (spec.f_hi - spec.f_lo) * cls / (spec.n_classes - 1);
}

SynthDataset synth_dataset(const SynthSpec& spec) {
  spec.validate();
  const nk::Stream root(spec.seed);
  const auto topo = topographies(spec, root.split("topography"));
  const double noise_sd = std::isinf(spec.snr) ? 0.0 : spec.signal_uV / std::sqrt(spec.snr);
  const std::size_t ct = static_cast<std::size_t>(spec.channels) * spec.timesteps;

  SynthDataset out{SegmentStore(spec.channels, spec.timesteps, spec.fs, true, spec.labeled), {}};
  const nk::Stream samples = root.split("samples");
  const int width = std::max(6, static_cast<int>(std::to_string(spec.n_samples).size()));
  for (std::uint32_t i = 0; i < spec.n_samples; ++i) {
    const int cls = static_cast<int>(i % static_cast<std::uint32_t>(spec.n_classes));
    nk::Stream rng = samples.split(i);
    const double centre = class_center_hz(spec, cls);
    EegSegment seg;
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt == kMaxRedraws) throw std::runtime_error("synth: amplitude rejection never passed; lower amplitudes");
      std::vector<double> x(ct, 0.0);
      add_band(x, spec, topo[static_cast<std::size_t>(cls)], centre - spec.bandwidth_hz / 2,
               centre + spec.bandwidth_hz / 2, spec.signal_uV, rng);
      if (spec.distractor_uV > 0) {
        std::vector<double> dtopo(spec.channels);
        for (auto& v : dtopo) v = rng.normal();
        const double f = 1.0 + (spec.fs / 2 - 2.0) * rng.uniform();
        add_band(x, spec, dtopo, f - spec.bandwidth_hz / 2, f + spec.bandwidth_hz / 2, spec.distractor_uV, rng);
      }
      if (noise_sd > 0)
        for (auto& v : x) v += noise_sd * rng.normal();
      std::vector<float> xf(x.begin(), x.end());
      seg = EegSegment(spec.channels, spec.timesteps, spec.fs, std::move(xf));
      if (reject_amplitude(seg)) break;
    }
    char id[64];
    std::snprintf(id, sizeof id, "%s%0*u", spec.id_prefix.c_str(), width, i);
    out.store.add(id, normalize_unit(seg), spec.labeled ? std::optional<int>(cls) : std::nullopt);
  }

  if (spec.labeled) {
    std::vector<std::size_t> perm(spec.n_samples);
    std::iota(perm.begin(), perm.end(), 0);
    nk::Stream srng = root.split("split");
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[srng.uniform_int(i)]);
    const std::size_t n_train = perm.size() * 6 / 10, n_val = perm.size() * 2 / 10;
    for (std::size_t k = 0; k < perm.size(); ++k) {
      auto& part = k < n_train ? out.split.train : k < n_train + n_val ? out.split.val : out.split.test;
      part.push_back(out.store.id(perm[k]));
    }
    out.split.n_classes = spec.n_classes;
  }
  return out;
}

}  // namespace mtdp::data
