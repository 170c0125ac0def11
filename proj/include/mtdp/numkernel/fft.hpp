#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "mtdp/numkernel/error.hpp"

namespace mtdp::nk {

/// One-sided real DFT as a precomputed twiddle table. Sizes here are small
/// (patch lengths, single segments), so the table form is both the fastest
/// and the simplest to differentiate.
template <typename Real>
class RealDft {
 public:
  explicit RealDft(std::size_t length) : n_(length), bins_(length / 2 + 1) {
    if (length < 2) throw ShapeError("rfft: length must be >= 2, got " + std::to_string(length));
    cos_.resize(bins_ * n_);
    sin_.resize(bins_ * n_);
    for (std::size_t k = 0; k < bins_; ++k) {
      for (std::size_t t = 0; t < n_; ++t) {
        // Reduce k*t mod n first so the angle stays small and exact.
        const double angle = 2.0 * std::numbers::pi * static_cast<double>((k * t) % n_) / static_cast<double>(n_);
        cos_[k * n_ + t] = static_cast<Real>(std::cos(angle));
        sin_[k * n_ + t] = static_cast<Real>(std::sin(angle));
      }
    }
  }

  std::size_t length() const noexcept { return n_; }
  std::size_t bins() const noexcept { return bins_; }

  // X_k = sum_t x_t e^{-2 pi i k t / n}; re = sum x cos, im = -sum x sin.
  void transform(const Real* x, Real* re, Real* im) const {
    for (std::size_t k = 0; k < bins_; ++k) {
      const Real* c = &cos_[k * n_];
      const Real* s = &sin_[k * n_];
      Real acc_re = 0, acc_im = 0;
      for (std::size_t t = 0; t < n_; ++t) {
        acc_re += x[t] * c[t];
        acc_im -= x[t] * s[t];
      }
      re[k] = acc_re;
      im[k] = acc_im;
    }
  }

  void magnitude(const Real* x, Real* mag) const {
    std::vector<Real> re(bins_), im(bins_);
    transform(x, re.data(), im.data());
    for (std::size_t k = 0; k < bins_; ++k) mag[k] = std::sqrt(re[k] * re[k] + im[k] * im[k]);
  }

  Real cos_at(std::size_t k, std::size_t t) const { return cos_[k * n_ + t]; }
  Real sin_at(std::size_t k, std::size_t t) const { return sin_[k * n_ + t]; }

 private:
  std::size_t n_;
  std::size_t bins_;
  std::vector<Real> cos_;
  std::vector<Real> sin_;
};

/// Magnitudes of the one-sided real DFT, length floor(P/2)+1.
inline std::vector<double> rfft_bins(std::span<const double> patch) {
  RealDft<double> dft(patch.size());
  std::vector<double> out(dft.bins());
  dft.magnitude(patch.data(), out.data());
  return out;
}

}  // namespace mtdp::nk
