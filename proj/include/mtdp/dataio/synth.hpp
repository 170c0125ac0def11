#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mtdp/dataio/segment.hpp"

namespace mtdp::data {

struct SynthSpec {
  std::uint32_t channels = 4;
  std::uint32_t timesteps = 400;
  float fs = 100.0f;
  std::uint32_t n_samples = 400;
  int n_classes = 2;
  /// Ratio of planted-signal power to white-noise power; infinity disables noise.
  double snr = 1.0;
  std::uint64_t seed = 0;
  bool labeled = true;
  /// RMS of the planted oscillation in µV.
  double signal_uV = 10.0;
  /// Class centre frequencies are spaced evenly over [f_lo, f_hi].
  double f_lo = 6.0, f_hi = 24.0;
  /// Width of each class band; the oscillation is a sum of tones inside it.
  double bandwidth_hz = 2.0;
  /// RMS of class-independent tones at random frequencies and topographies.
  double distractor_uV = 0.0;
  std::string id_prefix = "s";

  void validate() const;
};

struct SynthDataset {
  SegmentStore store;
  /// Empty for unlabeled stores.
  TaskSplit split;
};

double class_center_hz(const SynthSpec& spec, int cls);

/// Draws segments in µV, redraws any that fail amplitude rejection, then
/// normalizes to unit scale. Labels cycle through the classes; the split is a
/// seeded 60/20/20 permutation.
SynthDataset synth_dataset(const SynthSpec& spec);

}  // namespace mtdp::data
