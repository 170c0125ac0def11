#pragma once

#include <cstdint>
#include <string_view>

namespace mtdp::nk {

// FNV-1a over bytes; stable across platforms and library versions.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Counter-based random stream.
///
/// The n-th draw is a pure function of (key, n), so a stream can be split
/// into independent named children without consuming draws from the parent.
/// Every stochastic call site takes an explicit Stream (init, masking,
/// dropout, data order).
class Stream {
 public:
  explicit Stream(std::uint64_t key = 0) : key_(mix64(key ^ 0x6a09e667f3bcc909ULL)) {}

  Stream split(std::string_view name) const;
  Stream split(std::uint64_t index) const;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);
  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller (one value per two uniforms).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

 private:
  struct Raw {};
  Stream(std::uint64_t key, Raw) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mtdp::nk
