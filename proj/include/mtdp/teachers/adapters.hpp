#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtdp/dataio/segment.hpp"

namespace mtdp::teach {

/// A frozen teacher: a deterministic map from a segment to a d_k vector.
/// The sample id is passed alongside for teachers keyed on identity.
class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual const std::string& name() const = 0;
  virtual std::uint32_t dim() const = 0;
  virtual std::vector<float> embed(const data::EegSegment& x, const std::string& sample_id) const = 0;
};

/// 3×C×T planes of the segment min-max scaled over all C·T values to [0, 1].
/// A constant segment maps to 0.5 everywhere.
std::vector<float> image_view_adapt(const data::EegSegment& x);

/// One series per channel.
std::vector<std::vector<float>> univariate_views(const data::EegSegment& x);

/// Arithmetic mean of equal-length vectors; throws std::invalid_argument on an
/// empty list or mismatched lengths.
std::vector<float> mean_pool_channels(const std::vector<std::vector<float>>& reps);

/// Fixed seeded linear map d_in → d_out (Gaussian, variance 1/d_in) used to
/// bring a teacher with a different width onto the fusion dimension.
class Aligner {
 public:
  Aligner(std::uint32_t d_in, std::uint32_t d_out, std::uint64_t seed);
  std::vector<float> operator()(const std::vector<float>& v) const;
  std::uint32_t d_in() const { return d_in_; }
  std::uint32_t d_out() const { return d_out_; }

 private:
  std::uint32_t d_in_, d_out_;
  std::vector<double> w_;  // (d_out, d_in)
};

}  // namespace mtdp::teach
