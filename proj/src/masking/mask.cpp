#include "mtdp/masking/mask.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mtdp::mask {

std::size_t BinaryMask::zero_count() const { return static_cast<std::size_t>(std::count(m.begin(), m.end(), 0)); }

void MaskingConfig::validate() const {
  if (!(segment_prob >= 0.0 && segment_prob <= 1.0)) throw std::invalid_argument("masking: segment_prob outside [0, 1]");
  if (!(min_seconds > 0.0) || max_seconds < min_seconds) {
    throw std::invalid_argument("masking: need 0 < min_seconds <= max_seconds");
  }
}

BinaryMask build_mask(const MaskSpec& spec, std::uint32_t channels, std::uint32_t timesteps) {
  BinaryMask out = BinaryMask::ones(channels, timesteps);
  if (spec.kind == MaskKind::ChannelDropout) {
    if (spec.channel >= channels) {
      throw std::invalid_argument("mask channel " + std::to_string(spec.channel) + " >= C = " + std::to_string(channels));
    }
    std::fill_n(out.m.begin() + std::ptrdiff_t(spec.channel) * timesteps, timesteps, 0);
  } else {
    if (spec.length == 0 || std::size_t(spec.start) + spec.length > timesteps) {
      throw std::invalid_argument("mask window does not fit in [0, T)");
    }
    for (std::size_t c = 0; c < channels; ++c)
      std::fill_n(out.m.begin() + std::ptrdiff_t(c * timesteps + spec.start), spec.length, 0);
  }
  return out;
}

std::pair<MaskSpec, BinaryMask> sample_mask(std::uint32_t channels, std::uint32_t timesteps, float fs,
                                            nk::Stream& rng, const MaskingConfig& cfg) {
  cfg.validate();
  const auto lo = static_cast<std::int64_t>(std::ceil(cfg.min_seconds * fs - 1e-9));
  const auto hi = static_cast<std::int64_t>(std::floor(cfg.max_seconds * fs + 1e-9));
  if (lo < 1 || hi < lo) throw std::invalid_argument("masking: window length range is empty at this fs");
  if (static_cast<std::int64_t>(timesteps) < hi) {
    throw std::invalid_argument("segment of " + std::to_string(timesteps) + " samples is shorter than the " +
                                std::to_string(hi) + "-sample maximum mask window");
  }
  MaskSpec spec;
  if (rng.uniform() < cfg.segment_prob) {
    spec.kind = MaskKind::SegmentMask;
    spec.length = static_cast<std::uint32_t>(rng.uniform_int(lo, hi));
    spec.start = static_cast<std::uint32_t>(rng.uniform_int(std::int64_t{0}, std::int64_t(timesteps - spec.length)));
  } else {
    spec.kind = MaskKind::ChannelDropout;
    spec.channel = static_cast<std::uint32_t>(rng.uniform_int(channels));
  }
  return {spec, build_mask(spec, channels, timesteps)};
}

data::EegSegment apply_mask(const data::EegSegment& x, const BinaryMask& m) {
  if (m.channels != x.channels || m.timesteps != x.timesteps || m.m.size() != x.data.size()) {
    throw std::invalid_argument("mask shape (" + std::to_string(m.channels) + ", " + std::to_string(m.timesteps) +
                                ") does not match segment (" + std::to_string(x.channels) + ", " +
                                std::to_string(x.timesteps) + ")");
  }
  data::EegSegment out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    if (!m.m[i]) out.data[i] = 0.0f;
  return out;
}

}  // namespace mtdp::mask
