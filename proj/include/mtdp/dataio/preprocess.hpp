#pragma once

#include <span>
#include <vector>

#include "mtdp/dataio/segment.hpp"

namespace mtdp::data {

/// Cuts a C×N channel-major recording into contiguous non-overlapping windows
/// of window_s seconds. The trailing remainder is dropped; a recording shorter
/// than one window yields no segments.
std::vector<EegSegment> segment_recording(std::span<const float> raw, std::uint32_t channels, float fs,
                                          double window_s = 30.0);

/// Keep iff max |value| <= thresh_uV. The boundary value itself is kept.
bool reject_amplitude(const EegSegment& seg, float thresh_uV = 100.0f);

/// Divides by unit_uV and marks the segment normalized; throws
/// std::logic_error on an already normalized segment.
EegSegment normalize_unit(const EegSegment& seg, float unit_uV = 100.0f);
EegSegment denormalize_unit(const EegSegment& seg, float unit_uV = 100.0f);

}  // namespace mtdp::data
