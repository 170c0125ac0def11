#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "mtdp/dataio/preprocess.hpp"
#include "mtdp/dataio/segment_file.hpp"
#include "mtdp/dataio/synth.hpp"
#include "mtdp/numkernel/rng.hpp"

using namespace mtdp;
using namespace mtdp::data;

namespace {

std::vector<float> ramp(std::size_t n) {
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<float>(i) * 0.25f - 7.0f;
  return v;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "mtdp_test_dataio";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Naive DFT power at one frequency, summed over channels.
double band_power(const EegSegment& s, double hz, double half_width) {
  double total = 0;
  const std::size_t T = s.timesteps;
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t k = 1; k < T / 2; ++k) {
      const double f = k * s.fs / T;
      if (std::abs(f - hz) > half_width) continue;
      double re = 0, im = 0;
      for (std::size_t t = 0; t < T; ++t) {
        re += s.at(c, t) * std::cos(2 * std::numbers::pi * k * t / T);
        im -= s.at(c, t) * std::sin(2 * std::numbers::pi * k * t / T);
      }
      total += re * re + im * im;
    }
  }
  return total;
}

}  // namespace

TEST_CASE("segment_recording keeps whole windows only") {
  const float fs = 4.0f;
  const std::uint32_t C = 2;
  CHECK(segment_recording(ramp(C * 90 * 4), C, fs).size() == 3);
  CHECK(segment_recording(ramp(C * 95 * 4), C, fs).size() == 3);
  CHECK(segment_recording(ramp(C * 10 * 4), C, fs).empty());

  // Values are copied exactly, contiguous and channel-major.
  const auto raw = ramp(C * 95 * 4);
  const auto segs = segment_recording(raw, C, fs);
  const std::size_t n = 95 * 4, w = 30 * 4;
  for (std::size_t s = 0; s < segs.size(); ++s)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < w; ++t) REQUIRE(segs[s].at(c, t) == raw[c * n + s * w + t]);
}

TEST_CASE("amplitude rejection boundary is inclusive") {
  EegSegment zero(2, 5, 100.0f, std::vector<float>(10, 0.0f));
  CHECK(reject_amplitude(zero));
  auto hot = zero;
  hot.at(1, 3) = 100.5f;
  CHECK_FALSE(reject_amplitude(hot));
  auto edge = zero;
  edge.at(0, 0) = -100.0f;
  CHECK(reject_amplitude(edge));
}

TEST_CASE("unit normalization") {
  EegSegment s(1, 3, 100.0f, {50.0f, 0.0f, -100.0f});
  auto n = normalize_unit(s);
  CHECK(n.normalized);
  CHECK(n.data[0] == 0.5f);
  CHECK(n.data[1] == 0.0f);
  CHECK(n.data[2] == -1.0f);
  CHECK_THROWS_AS(normalize_unit(n), std::logic_error);

  nk::Stream rng(3);
  std::vector<float> v(5000);
  for (auto& x : v) x = static_cast<float>(200.0 * rng.uniform() - 100.0);
  EegSegment big(1, 5000, 100.0f, v);
  auto back = denormalize_unit(normalize_unit(big));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const float a = v[i], b = back.data[i];
    CHECK((a == b || std::nextafter(a, b) == b));
  }
}

TEST_CASE("segment invariants") {
  CHECK_THROWS_AS(EegSegment(0, 5, 100.0f, {}), std::invalid_argument);
  CHECK_THROWS_AS(EegSegment(1, 2, 100.0f, {1.0f, NAN}), std::invalid_argument);
  CHECK_THROWS_AS(EegSegment(1, 2, 100.0f, {1.5f, 0.0f}, true), std::invalid_argument);
  SegmentStore store(1, 2, 100.0f, false, false);
  store.add("a", EegSegment(1, 2, 100.0f, {1, 2}));
  CHECK_THROWS_AS(store.add("a", EegSegment(1, 2, 100.0f, {1, 2})), std::invalid_argument);
  CHECK_THROWS_AS(store.add("b", EegSegment(1, 3, 100.0f, {1, 2, 3})), std::invalid_argument);
}

TEST_CASE("synthetic dataset") {
  SynthSpec spec;
  spec.n_samples = 60;
  spec.seed = 17;

  SUBCASE("same seed gives bit-identical stores") {
    auto a = synth_dataset(spec), b = synth_dataset(spec);
    CHECK(a.store == b.store);
    CHECK(a.split.train == b.split.train);
    spec.seed = 18;
    CHECK_FALSE(synth_dataset(spec).store == a.store);
  }
  SUBCASE("normalized values and a disjoint 60/20/20 split") {
    auto d = synth_dataset(spec);
    CHECK(d.store.normalized());
    for (std::size_t i = 0; i < d.store.size(); ++i)
      for (float v : d.store.segment(i).data) REQUIRE(std::abs(v) <= 1.0f);
    CHECK(d.split.train.size() == 36);
    CHECK(d.split.val.size() == 12);
    CHECK(d.split.test.size() == 12);
    CHECK_NOTHROW(d.split.validate(d.store));
  }
  SUBCASE("noiseless classes are separable by band power") {
    spec.snr = std::numeric_limits<double>::infinity();
    spec.n_classes = 3;
    auto d = synth_dataset(spec);
    for (std::size_t i = 0; i < d.store.size(); ++i) {
      int best = -1;
      double best_p = -1;
      for (int c = 0; c < spec.n_classes; ++c) {
        const double p = band_power(d.store.segment(i), class_center_hz(spec, c), spec.bandwidth_hz / 2 + 0.3);
        if (p > best_p) best_p = p, best = c;
      }
      CHECK(best == d.store.label(i));
    }
  }
  SUBCASE("unlabeled mode") {
    spec.labeled = false;
    auto d = synth_dataset(spec);
    CHECK_FALSE(d.store.labeled());
    CHECK(d.split.train.empty());
  }
}

TEST_CASE("segment file round trip") {
  SynthSpec spec;
  spec.n_samples = 7;
  auto store = synth_dataset(spec).store;
  const auto path = temp_path("rt.eegseg");
  write_segments(store, path);
  auto back = read_segments(path);
  CHECK(back == store);
  CHECK(encode_segments(back) == encode_segments(store));

  spec.labeled = false;
  auto unl = synth_dataset(spec).store;
  CHECK(decode_segments(encode_segments(unl)) == unl);

  // Header layout.
  const auto bytes = encode_segments(store);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "EEGS");
  CHECK(bytes[4] == 1);
  CHECK(bytes[24] == 7);
  CHECK(bytes[20] == 3);  // normalized | labels
  CHECK(bytes.size() == 28 + 7 * (2 + 7 + 2 + 4 * 400 * 4));
}

TEST_CASE("segment file structured errors") {
  SynthSpec spec;
  spec.n_samples = 3;
  const auto bytes = encode_segments(synth_dataset(spec).store);

  auto bad = bytes;
  bad[0] = 'X';
  try {
    decode_segments(bad);
    FAIL("expected bad magic");
  } catch (const FormatError& e) {
    CHECK(e.kind() == FormatError::Kind::BadMagic);
    CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
  }

  auto ver = bytes;
  ver[4] = 2;
  try {
    decode_segments(ver);
    FAIL("expected version mismatch");
  } catch (const FormatError& e) {
    CHECK(e.kind() == FormatError::Kind::VersionMismatch);
    CHECK(e.expected() == 1);
    CHECK(e.actual() == 2);
  }

  std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 10);
  try {
    decode_segments(cut);
    FAIL("expected truncation");
  } catch (const FormatError& e) {
    CHECK(e.kind() == FormatError::Kind::Truncated);
    CHECK(e.expected() == bytes.size());
    CHECK(e.actual() == cut.size());
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }

  CHECK_THROWS_AS(read_segments(temp_path("does_not_exist.eegseg")), MissingArtifactError);
}

TEST_CASE("split file round trip") {
  TaskSplit s{{"a", "b"}, {"c"}, {"d"}, 2};
  const auto path = temp_path("split.json");
  write_split(s, path);
  auto back = read_split(path);
  CHECK(back.train == s.train);
  CHECK(back.val == s.val);
  CHECK(back.test == s.test);
  CHECK(back.n_classes == 2);
}
