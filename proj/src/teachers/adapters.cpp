#include "mtdp/teachers/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mtdp/numkernel/rng.hpp"

namespace mtdp::teach {

std::vector<float> image_view_adapt(const data::EegSegment& x) {
  const auto [lo_it, hi_it] = std::minmax_element(x.data.begin(), x.data.end());
  const double lo = *lo_it, hi = *hi_it;
  const std::size_t n = x.data.size();
  std::vector<float> out(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = hi == lo ? 0.5 : (x.data[i] - lo) / (hi - lo);
    out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  std::copy_n(out.begin(), n, out.begin() + static_cast<std::ptrdiff_t>(n));
  std::copy_n(out.begin(), n, out.begin() + static_cast<std::ptrdiff_t>(2 * n));
  return out;
}

std::vector<std::vector<float>> univariate_views(const data::EegSegment& x) {
  std::vector<std::vector<float>> out(x.channels);
  for (std::size_t c = 0; c < x.channels; ++c) {
    const auto begin = x.data.begin() + static_cast<std::ptrdiff_t>(c * x.timesteps);
    out[c].assign(begin, begin + x.timesteps);
  }
  return out;
}

std::vector<float> mean_pool_channels(const std::vector<std::vector<float>>& reps) {
  if (reps.empty()) throw std::invalid_argument("mean_pool_channels: empty rep list");
  const std::size_t d = reps.front().size();
  std::vector<double> acc(d, 0.0);
  for (const auto& r : reps) {
    if (r.size() != d) throw std::invalid_argument("mean_pool_channels: reps differ in dimension");
    for (std::size_t i = 0; i < d; ++i) acc[i] += r[i];
  }
  std::vector<float> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<float>(acc[i] / static_cast<double>(reps.size()));
  return out;
}

Aligner::Aligner(std::uint32_t d_in, std::uint32_t d_out, std::uint64_t seed)
    : d_in_(d_in), d_out_(d_out), w_(std::size_t(d_in) * d_out) {
  if (d_in == 0 || d_out == 0) throw std::invalid_argument("aligner dimensions must be positive");
  nk::Stream rng = nk::Stream(seed).split("aligner");
  const double sd = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (auto& v : w_) v = sd * rng.normal();
}

std::vector<float> Aligner::operator()(const std::vector<float>& v) const {
  if (v.size() != d_in_) throw std::invalid_argument("aligner input has the wrong dimension");
  std::vector<float> out(d_out_);
  for (std::size_t o = 0; o < d_out_; ++o) {
    double s = 0;
    for (std::size_t i = 0; i < d_in_; ++i) s += w_[o * d_in_ + i] * v[i];
    out[o] = static_cast<float>(s);
  }
  return out;
}

}  // namespace mtdp::teach
