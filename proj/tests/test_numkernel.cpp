#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "mtdp/numkernel/fft.hpp"
#include "mtdp/numkernel/gradcheck.hpp"
#include "mtdp/numkernel/layers.hpp"
#include "mtdp/numkernel/ops.hpp"
#include "mtdp/numkernel/optim.hpp"

using namespace mtdp;
using namespace mtdp::nk;

namespace {

Tensor<double> randn(Shape shape, Stream& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// Scalarizes an op output with a fixed random functional so every output
// coordinate contributes to the checked gradient.
Var<double> probe(const Var<double>& out, std::uint64_t seed) {
  Stream rng(seed);
  return dot_const(out, randn(out.shape(), rng));
}

constexpr double kSmooth = 1e-6;

}  // namespace

TEST_CASE("sum of x has unit gradient") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({3}, {4.0, -1.0, 2.5}));
  tape.backward(sum(x));
  for (double g : tape.grad(x).values()) CHECK(g == 1.0);
}

TEST_CASE("half squared norm has gradient x") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({3}, {1.0, 2.0, 3.0}));
  tape.backward(scale(sum(mul(x, x)), 0.5));
  CHECK(tape.grad(x)[0] == doctest::Approx(1.0));
  CHECK(tape.grad(x)[1] == doctest::Approx(2.0));
  CHECK(tape.grad(x)[2] == doctest::Approx(3.0));
}

TEST_CASE("shape mismatch names the primitive and extents") {
  Tape<float> tape;
  auto x = tape.leaf(Tensor<float>({2, 3}));
  auto w = tape.leaf(Tensor<float>({4, 5}));
  try {
    linear(x, w);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("linear") != std::string::npos);
    CHECK(msg.find("(4, 5)") != std::string::npos);
  }
  CHECK_THROWS_AS(add(x, tape.leaf(Tensor<float>({3, 2}))), ShapeError);
}

TEST_CASE("finite-difference checks on smooth primitives") {
  Stream rng(11);
  ParamSet<double> ps;
  auto& x = ps.add("x", randn({2, 3, 5}, rng));
  auto& w = ps.add("w", randn({5, 4}, rng));
  auto& b = ps.add("b", randn({4}, rng));
  auto& g = ps.add("gamma", randn({5}, rng));
  auto& be = ps.add("beta", randn({5}, rng));

  SUBCASE("linear") {
    auto r = gradient_check(ps, [&](Tape<double>& t) {
      return probe(linear(t.param(x), t.param(w), t.param(b)), 1);
    }, 1000, Stream(1));
    CHECK(r.max_rel_error < kSmooth);
  }
  SUBCASE("layer_norm") {
    auto r = gradient_check(ps, [&](Tape<double>& t) {
      return probe(layer_norm(t.param(x), t.param(g), t.param(be)), 2);
    }, 1000, Stream(2));
    CHECK(r.max_rel_error < kSmooth);
  }
  SUBCASE("softmax") {
    auto r = gradient_check(ps, [&](Tape<double>& t) { return probe(softmax(t.param(x)), 3); }, 1000, Stream(3));
    CHECK(r.max_rel_error < kSmooth);
  }
  SUBCASE("gelu and elu") {
    auto r = gradient_check(ps, [&](Tape<double>& t) {
      return add(probe(gelu(t.param(x)), 4), probe(elu(t.param(x)), 5));
    }, 1000, Stream(4));
    CHECK(r.max_rel_error < kSmooth);
  }
  SUBCASE("mean_tokens, concat and slice") {
    auto r = gradient_check(ps, [&](Tape<double>& t) {
      auto xv = t.param(x);
      auto cat = concat_last<double>({slice_last(xv, 1, 3), xv});
      return add(probe(mean_tokens(cat), 6), probe(reshape(xv, {6, 5}), 7));
    }, 1000, Stream(5));
    CHECK(r.max_rel_error < kSmooth);
  }
  SUBCASE("losses") {
    auto& y = ps.add("y", randn({2, 3, 5}, rng));
    auto r = gradient_check(ps, [&](Tape<double>& t) {
      auto a = reshape(t.param(x), {6, 5});
      auto c = reshape(t.param(y), {6, 5});
      auto l1 = mse_loss(a, c);
      auto l2 = squared_l2_loss(a, c);
      auto l3 = cosine_embedding_loss(a, c);
      const std::vector<int> labels{0, 4, 2, 1, 3, 3};
      auto l4 = cross_entropy(a, std::span<const int>(labels), 0.1);
      return add(add(l1, l2), add(l3, l4));
    }, 1000, Stream(6));
    CHECK(r.max_rel_error < kSmooth);
  }
}

TEST_CASE("finite-difference check on relu away from the kink") {
  Stream rng(12);
  ParamSet<double> ps;
  auto init = randn({40}, rng);
  for (auto& v : init.values())
    if (std::abs(v) < 1e-3) v = 0.5;
  auto& x = ps.add("x", init);
  auto r = gradient_check(ps, [&](Tape<double>& t) { return probe(relu(t.param(x)), 8); }, 100, Stream(7));
  CHECK(r.max_rel_error < kSmooth);
}

TEST_CASE("finite-difference check on axis attention") {
  Stream rng(13);
  ParamSet<double> ps;
  auto& qkv = ps.add("qkv", randn({2, 3, 4, 12}, rng));
  for (auto axis : {AttentionAxis::Spatial, AttentionAxis::Temporal}) {
    auto r = gradient_check(ps, [&](Tape<double>& t) {
      return probe(axis_attention(t.param(qkv), 2, axis), 9);
    }, 1000, Stream(8));
    CHECK(r.max_rel_error < kSmooth);
  }
}

TEST_CASE("attention rows are normalized and single-key attention is identity weighted") {
  Stream rng(14);
  Tape<double> tape;
  auto qkv = tape.leaf(randn({2, 3, 5, 12}, rng));
  std::vector<double> probs;
  axis_attention(qkv, 2, AttentionAxis::Temporal, &probs);
  for (std::size_t r = 0; r < probs.size() / 5; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) s += probs[r * 5 + j];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  auto single = tape.leaf(randn({1, 1, 3, 6}, rng));
  auto out = axis_attention(single, 1, AttentionAxis::Spatial, &probs);
  for (double p : probs) CHECK(p == 1.0);
  // Output equals the value vector of the token itself.
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t e = 0; e < 2; ++e) CHECK(out.value()[n * 2 + e] == single.value()[n * 6 + 4 + e]);
}

TEST_CASE("finite-difference check on convolutions") {
  Stream rng(15);
  ParamSet<double> ps;
  auto& x = ps.add("x", randn({3, 2, 16}, rng));
  auto& w = ps.add("w", randn({4, 2, 5}, rng));
  auto& b = ps.add("b", randn({4}, rng));
  auto r = gradient_check(ps, [&](Tape<double>& t) {
    return probe(conv1d(t.param(x), t.param(w), t.param(b), 3, 2), 10);
  }, 1000, Stream(9));
  CHECK(r.max_rel_error < kSmooth);

  ParamSet<double> ps2;
  auto& grid = ps2.add("grid", randn({2, 4, 5, 3}, rng));
  auto& k = ps2.add("k", randn({3, 5, 3}, rng));
  auto& kb = ps2.add("kb", randn({3}, rng));
  auto r2 = gradient_check(ps2, [&](Tape<double>& t) {
    return probe(depthwise_conv2d(t.param(grid), t.param(k), t.param(kb)), 11);
  }, 1000, Stream(10));
  CHECK(r2.max_rel_error < kSmooth);
}

TEST_CASE("finite-difference check on the FFT front-end and fusion") {
  Stream rng(16);
  ParamSet<double> ps;
  auto& x = ps.add("x", randn({3, 16}, rng));
  auto r = gradient_check(ps, [&](Tape<double>& t) { return probe(rfft_magnitude(t.param(x)), 12); }, 1000, Stream(11));
  CHECK(r.max_rel_error < kSmooth);

  ParamSet<double> ps2;
  auto& w = ps2.add("w", randn({4, 3}, rng));
  auto& h1 = ps2.add("h1", randn({4, 6}, rng));
  auto& h2 = ps2.add("h2", randn({4, 6}, rng));
  auto& h3 = ps2.add("h3", randn({4, 6}, rng));
  auto r2 = gradient_check(ps2, [&](Tape<double>& t) {
    auto sw = softmax(t.param(w));
    return probe(weighted_sum(sw, {t.param(h1), t.param(h2), t.param(h3)}), 13);
  }, 1000, Stream(12));
  CHECK(r2.max_rel_error < kSmooth);
}

TEST_CASE("dropout gradient follows its mask") {
  Stream rng(17);
  ParamSet<double> ps;
  auto& x = ps.add("x", randn({50}, rng));
  auto r = gradient_check(ps, [&](Tape<double>& t) {
    Stream drop(99);
    return probe(dropout(t.param(x), 0.3, drop), 14);
  }, 100, Stream(13));
  CHECK(r.max_rel_error < kSmooth);
}

TEST_CASE("adamw") {
  OptimizerConfig cfg;
  cfg.weight_decay = 0.0;

  SUBCASE("null update advances the step count only") {
    Parameter<double> p("w", Tensor<double>({2}, {0.3, -0.7}));
    adamw_step(p, cfg, 1e-3);
    CHECK(p.value[0] == 0.3);
    CHECK(p.value[1] == -0.7);
    CHECK(p.step_count == 1);
  }
  SUBCASE("first bias-corrected step") {
    Parameter<double> p("w", Tensor<double>({1}, {1.0}));
    p.grad[0] = 1.0;
    adamw_step(p, cfg, 0.1);
    // m_hat = 1, v_hat = 1 -> w = 1 - 0.1 / (1 + 1e-8)
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-6));
  }
  SUBCASE("decoupled weight decay") {
    cfg.weight_decay = 5e-2;
    Parameter<double> p("w", Tensor<double>({1}, {2.0}));
    adamw_step(p, cfg, 5e-4);
    CHECK(p.value[0] == doctest::Approx(2.0 * (1.0 - 2.5e-5)).epsilon(1e-14));
  }
  SUBCASE("non-finite gradient aborts with the step index") {
    Parameter<float> p("w", Tensor<float>({1}, {1.0f}));
    p.step_count = 7;
    p.grad[0] = std::nanf("");
    try {
      adamw_step(p, cfg, 1e-3);
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(e.step() == 7);
    }
  }
}

TEST_CASE("cosine annealing schedule") {
  OptimizerConfig cfg;
  cfg.lr_max = 5e-4;
  cfg.lr_min = 1e-5;
  cfg.total_steps = 100;
  CHECK(cosine_annealing_lr(0, cfg) == doctest::Approx(5e-4));
  CHECK(cosine_annealing_lr(100, cfg) == doctest::Approx(1e-5));
  CHECK(cosine_annealing_lr(50, cfg) == doctest::Approx((5e-4 + 1e-5) / 2));
  CHECK(cosine_annealing_lr(500, cfg) == 1e-5);
}

TEST_CASE("gradient clipping") {
  Parameter<double> a("a", Tensor<double>({2}));
  std::vector<Parameter<double>*> ps{&a};
  a.grad = Tensor<double>({2}, {0.3, 0.4});
  clip_grad_norm<double>(ps, 1.0);
  CHECK(a.grad[0] == 0.3);
  a.grad = Tensor<double>({2}, {3.0, 4.0});
  CHECK(clip_grad_norm<double>(ps, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad[0] == doctest::Approx(0.6));
  CHECK(a.grad[1] == doctest::Approx(0.8));
  a.grad = Tensor<double>({2});
  clip_grad_norm<double>(ps, 1.0);
  CHECK(a.grad[0] == 0.0);

  // Never increases the norm; post-norm bounded by max_norm.
  Stream rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Parameter<double> p("p", Tensor<double>({7}));
    for (auto& g : p.grad.values()) g = rng.normal() * std::exp(3.0 * rng.normal());
    std::vector<Parameter<double>*> one{&p};
    const double max_norm = 0.1 + rng.uniform();
    const double before = global_grad_norm<double>(one);
    clip_grad_norm<double>(one, max_norm);
    const double after = global_grad_norm<double>(one);
    CHECK(after <= before + 1e-12);
    CHECK(after <= max_norm + 1e-6);
  }
}

TEST_CASE("kaiming initialization") {
  auto sample_std = [](const Tensor<double>& t) {
    double s = 0, s2 = 0;
    for (double v : t.values()) {
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(t.size());
    return std::sqrt(s2 / n - (s / n) * (s / n));
  };
  Stream a(5), b(5);
  auto t1 = kaiming_init<double>({100000}, 2, a);
  CHECK(std::abs(sample_std(t1) - 1.0) < 0.02);
  auto t2 = kaiming_init<double>({100000}, 2, b);
  CHECK(t1 == t2);
  Stream c(6);
  auto t3 = kaiming_init<double>({100000}, 200, c);
  CHECK(std::abs(sample_std(t3) - 0.1) < 0.002);
}

TEST_CASE("softmax values and invariants") {
  auto run = [](std::vector<double> v) {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({v.size()}, v));
    return softmax(x).value();
  };
  auto u = run({0.0, 0.0});
  CHECK(u[0] == doctest::Approx(0.5));
  auto l = run({std::log(2.0), 0.0});
  CHECK(l[0] == doctest::Approx(2.0 / 3.0));
  CHECK(l[1] == doctest::Approx(1.0 / 3.0));
  auto big = run({1000.0, 0.0});
  CHECK(big.all_finite());
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] < 1e-300);

  Stream rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(1 + rng.uniform_int(8));
    for (auto& e : v) e = 5.0 * rng.normal();
    auto s = run(v);
    double total = 0;
    for (double p : s.values()) {
      CHECK(p > 0.0);
      total += p;
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("mse and cosine embedding loss values") {
  auto losses = [](std::vector<double> a, std::vector<double> b) {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({1, a.size()}, a));
    auto y = tape.leaf(Tensor<double>({1, b.size()}, b));
    return std::pair{mse_loss(x, y).value()[0], cosine_embedding_loss(x, y).value()[0]};
  };
  auto [m0, c0] = losses({1.0, -2.0, 0.5}, {1.0, -2.0, 0.5});
  CHECK(m0 == 0.0);
  CHECK(c0 == doctest::Approx(0.0));
  CHECK(losses({1.0, -2.0}, {-1.0, 2.0}).second == doctest::Approx(2.0));
  CHECK(losses({1.0, 0.0}, {1.0, 1.0}).second == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)));
  CHECK_THROWS_AS(losses({0.0, 0.0}, {1.0, 1.0}), NumericalError);

  // Range [0, 2]; zero exactly for positive multiples.
  Stream rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> a(4), b(4);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const double c = losses(a, b).second;
    CHECK(c >= 0.0);
    CHECK(c <= 2.0);
    std::vector<double> scaled(a);
    const double k = 0.1 + 10.0 * rng.uniform();
    for (auto& v : scaled) v *= k;
    CHECK(losses(a, scaled).second == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("rfft bins against a naive DFT") {
  auto naive = [](const std::vector<double>& x) {
    const std::size_t P = x.size();
    std::vector<double> mag(P / 2 + 1);
    for (std::size_t k = 0; k < mag.size(); ++k) {
      long double re = 0, im = 0;
      for (std::size_t n = 0; n < P; ++n) {
        const long double a = 2.0L * std::numbers::pi_v<long double> * k * n / P;
        re += x[n] * std::cos(a);
        im -= x[n] * std::sin(a);
      }
      mag[k] = static_cast<double>(std::sqrt(re * re + im * im));
    }
    return mag;
  };
  std::vector<double> patch(200, 0.0);
  CHECK(rfft_bins(patch).size() == 101);

  std::vector<double> dc(200, 0.75);
  auto dcm = rfft_bins(dc);
  CHECK(dcm[0] == doctest::Approx(0.75 * 200));
  for (std::size_t k = 1; k < dcm.size(); ++k) CHECK(dcm[k] < 1e-9);

  for (std::size_t bin : {1u, 7u, 33u}) {
    std::vector<double> s(200);
    for (std::size_t n = 0; n < 200; ++n) s[n] = std::sin(2.0 * std::numbers::pi * bin * n / 200.0);
    auto mag = rfft_bins(s);
    auto ref = naive(s);
    CHECK(std::max_element(mag.begin(), mag.end()) - mag.begin() == static_cast<std::ptrdiff_t>(bin));
    CHECK(std::abs(mag[bin] - 100.0) < 1e-6);
    for (std::size_t k = 0; k < mag.size(); ++k) CHECK(std::abs(mag[k] - ref[k]) < 1e-9);
  }
  Stream rng(4);
  std::vector<double> odd(41);
  for (auto& v : odd) v = rng.normal();
  auto mag = rfft_bins(odd);
  auto ref = naive(odd);
  REQUIRE(mag.size() == 21);
  for (std::size_t k = 0; k < mag.size(); ++k) CHECK(std::abs(mag[k] - ref[k]) < 1e-9);
}

TEST_CASE("random streams") {
  Stream a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  Stream root(42);
  auto s1 = root.split("init"), s2 = root.split("masking");
  CHECK(s1.next_u64() != s2.next_u64());
  // Splitting does not consume parent draws.
  Stream p(7), q(7);
  (void)p.split("x");
  CHECK(p.next_u64() == q.next_u64());
  Stream u(1);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) counts[u.uniform_int(5)]++;
  for (int c : counts) CHECK(std::abs(c - 10000) < 400);
}
