#pragma once

#include <cstdint>
#include <vector>

#include "mtdp/dataio/segment.hpp"
#include "mtdp/numkernel/rng.hpp"

namespace mtdp::mask {

enum class MaskKind : std::uint8_t { SegmentMask = 0, ChannelDropout = 1 };

struct MaskSpec {
  MaskKind kind = MaskKind::SegmentMask;
  /// SegmentMask: first masked sample and window length in samples.
  std::uint32_t start = 0, length = 0;
  /// ChannelDropout: the zeroed channel.
  std::uint32_t channel = 0;
};

/// C×T entries, each exactly 0 or 1, channel-major.
struct BinaryMask {
  std::uint32_t channels = 0, timesteps = 0;
  std::vector<std::uint8_t> m;

  static BinaryMask ones(std::uint32_t c, std::uint32_t t) { return {c, t, std::vector<std::uint8_t>(std::size_t(c) * t, 1)}; }
  std::size_t zero_count() const;
};

struct MaskingConfig {
  /// Probability of a contiguous time window; the rest are channel dropouts.
  double segment_prob = 0.5;
  double min_seconds = 1.0, max_seconds = 2.0;

  void validate() const;
};

/// Builds the mask described by `spec`; throws std::invalid_argument if the
/// window or channel falls outside C×T.
BinaryMask build_mask(const MaskSpec& spec, std::uint32_t channels, std::uint32_t timesteps);

/// Draws one mask. Window lengths are uniform over the integer sample counts
/// in [min_seconds·fs, max_seconds·fs] and starts uniform over every position
/// where the window fits. Throws std::invalid_argument if T < max_seconds·fs.
std::pair<MaskSpec, BinaryMask> sample_mask(std::uint32_t channels, std::uint32_t timesteps, float fs,
                                            nk::Stream& rng, const MaskingConfig& cfg = {});

/// x ⊙ m. Masked entries are exactly 0; the rest are bit-identical copies.
data::EegSegment apply_mask(const data::EegSegment& x, const BinaryMask& m);

}  // namespace mtdp::mask
