#include "mtdp/dataio/preprocess.hpp"

#include <cmath>
#include <stdexcept>

namespace mtdp::data {

std::vector<EegSegment> segment_recording(std::span<const float> raw, std::uint32_t channels, float fs,
                                          double window_s) {
  if (channels == 0 || raw.size() % channels != 0) {
    throw std::invalid_argument("recording size is not a multiple of the channel count");
  }
  const auto window = static_cast<std::size_t>(std::llround(window_s * fs));
  if (window == 0) throw std::invalid_argument("window must span at least one sample");
  const std::size_t n = raw.size() / channels;
  std::vector<EegSegment> out;
  for (std::size_t start = 0; start + window <= n; start += window) {
    std::vector<float> data(channels * window);
    for (std::size_t c = 0; c < channels; ++c) {
      const float* src = raw.data() + c * n + start;
      std::copy(src, src + window, data.begin() + static_cast<std::ptrdiff_t>(c * window));
    }
    out.emplace_back(channels, static_cast<std::uint32_t>(window), fs, std::move(data));
  }
  return out;
}

bool reject_amplitude(const EegSegment& seg, float thresh_uV) {
  if (seg.normalized) throw std::logic_error("amplitude rejection expects a segment in µV");
  for (float v : seg.data)
    if (std::abs(v) > thresh_uV) return false;
  return true;
}

EegSegment normalize_unit(const EegSegment& seg, float unit_uV) {
  if (seg.normalized) throw std::logic_error("segment is already normalized");
  EegSegment out = seg;
  for (auto& v : out.data) v /= unit_uV;
  out.normalized = true;
  return out;
}

EegSegment denormalize_unit(const EegSegment& seg, float unit_uV) {
  if (!seg.normalized) throw std::logic_error("segment is not normalized");
  EegSegment out = seg;
  for (auto& v : out.data) v *= unit_uV;
  out.normalized = false;
  return out;
}

}  // namespace mtdp::data
