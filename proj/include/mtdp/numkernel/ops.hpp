#pragma once

// Differentiable primitives recorded on a Tape. Each op computes its forward
// value eagerly and registers a closure with the exact reverse-mode rule.
// Inner loops are written as contiguous axpy updates so they vectorize
// without reassociating floating-point sums (results stay bit-deterministic).

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtdp/numkernel/fft.hpp"
#include "mtdp/numkernel/rng.hpp"
#include "mtdp/numkernel/tape.hpp"

namespace mtdp::nk {

namespace detail {

template <typename Real>
Tape<Real>& same_tape(const Var<Real>& a, const Var<Real>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw ShapeError(std::string(op) + ": operands recorded on different tapes");
  return a.tape();
}

template <typename Real>
void require_same_shape(const Var<Real>& a, const Var<Real>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

template <typename Real>
std::size_t last_dim(const Var<Real>& x, const char* op) {
  if (x.shape().empty()) throw ShapeError(std::string(op) + ": expected rank >= 1, got scalar");
  return x.shape().back();
}

template <typename Real>
void axpy(std::size_t n, Real a, const Real* __restrict x, Real* __restrict y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename Real, typename Fwd, typename Deriv>
Var<Real> unary(const Var<Real>& x, Fwd fwd, Deriv deriv) {
  const Tensor<Real>& xv = x.value();
  Tensor<Real> y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = fwd(xv[i]);
  const std::size_t xi = x.id();
  return x.tape().record(std::move(y), {x}, [xi, deriv](Tape<Real>& t, std::size_t self) {
    const Tensor<Real>& g = t.grad(self);
    const Tensor<Real>& xv = t.value(xi);
    const Tensor<Real>& yv = t.value(self);
    Tensor<Real>& gx = t.grad_acc(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
  auto& tape = detail::same_tape(a, b, "add");
  detail::require_same_shape(a, b, "add");
  Tensor<Real> y = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return tape.record(std::move(y), {a, b}, [ai, bi](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t id : {ai, bi}) {
      if (!t.needs_grad(id)) continue;
      auto& gx = t.grad_acc(id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
}

template <typename Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) {
  auto& tape = detail::same_tape(a, b, "mul");
  detail::require_same_shape(a, b, "mul");
  Tensor<Real> y = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return tape.record(std::move(y), {a, b}, [ai, bi](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(ai)) {
      const auto& bv = t.value(bi);
      auto& ga = t.grad_acc(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(bi)) {
      const auto& av = t.value(ai);
      auto& gb = t.grad_acc(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename Real>
Var<Real> scale(const Var<Real>& x, Real s) {
  return detail::unary(x, [s](Real v) { return v * s; }, [s](Real, Real) { return s; });
}

template <typename Real>
Var<Real> relu(const Var<Real>& x) {
  return detail::unary(
      x, [](Real v) { return v > Real(0) ? v : Real(0); }, [](Real v, Real) { return v > Real(0) ? Real(1) : Real(0); });
}

template <typename Real>
Var<Real> elu(const Var<Real>& x, Real alpha = Real(1)) {
  return detail::unary(
      x, [alpha](Real v) { return v > Real(0) ? v : alpha * std::expm1(v); },
      [alpha](Real v, Real y) { return v > Real(0) ? Real(1) : y + alpha; });
}

// Exact (erf) GELU.
template <typename Real>
Var<Real> gelu(const Var<Real>& x) {
  constexpr Real inv_sqrt2 = Real(0.70710678118654752440);
  constexpr Real inv_sqrt_2pi = Real(0.39894228040143267794);
  return detail::unary(
      x, [](Real v) { return Real(0.5) * v * (Real(1) + std::erf(v * inv_sqrt2)); },
      [](Real v, Real) {
        return Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(Real(-0.5) * v * v);
      });
}

// --------------------------------------------------------------- reductions

template <typename Real>
Var<Real> sum(const Var<Real>& x) {
  Real acc = 0;
  for (Real v : x.value().values()) acc += v;
  const std::size_t xi = x.id();
  return x.tape().record(Tensor<Real>(Shape{}, acc), {x}, [xi](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0];
    auto& gx = t.grad_acc(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

template <typename Real>
Var<Real> mean(const Var<Real>& x) {
  return scale(sum(x), Real(1) / static_cast<Real>(x.value().size()));
}

// Scalar <x, r> against a constant tensor of the same shape.
template <typename Real>
Var<Real> dot_const(const Var<Real>& x, const Tensor<Real>& r) {
  if (x.shape() != r.shape()) {
    throw ShapeError("dot_const: shape mismatch " + to_string(x.shape()) + " vs " + to_string(r.shape()));
  }
  Real acc = 0;
  const auto& xv = x.value();
  for (std::size_t i = 0; i < r.size(); ++i) acc += xv[i] * r[i];
  const std::size_t xi = x.id();
  return x.tape().record(Tensor<Real>(Shape{}, acc), {x}, [xi, r](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0];
    auto& gx = t.grad_acc(xi);
    for (std::size_t i = 0; i < r.size(); ++i) gx[i] += g * r[i];
  });
}

// Mean over every axis except the first and last: (B, ..., D) -> (B, D).
template <typename Real>
Var<Real> mean_tokens(const Var<Real>& x) {
  const auto& shape = x.shape();
  if (shape.size() < 2) throw ShapeError("mean_tokens: expected rank >= 2, got " + to_string(shape));
  const std::size_t batch = shape.front(), dim = shape.back();
  const std::size_t tokens = x.value().size() / (batch * dim);
  Tensor<Real> y(Shape{batch, dim});
  const Real inv = Real(1) / static_cast<Real>(tokens);
  const Real* xv = x.value().data();
  for (std::size_t b = 0; b < batch; ++b) {
    Real* yr = y.data() + b * dim;
    for (std::size_t m = 0; m < tokens; ++m) detail::axpy(dim, Real(1), xv + (b * tokens + m) * dim, yr);
    for (std::size_t d = 0; d < dim; ++d) yr[d] *= inv;
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(y), {x}, [xi, batch, tokens, dim, inv](Tape<Real>& t, std::size_t self) {
    const Real* g = t.grad(self).data();
    Real* gx = t.grad_acc(xi).data();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t m = 0; m < tokens; ++m) detail::axpy(dim, inv, g + b * dim, gx + (b * tokens + m) * dim);
  });
}

// ------------------------------------------------------------ shape plumbing

template <typename Real>
Var<Real> reshape(const Var<Real>& x, Shape shape) {
  Tensor<Real> y = x.value();
  y.reshape(std::move(shape));
  const std::size_t xi = x.id();
  return x.tape().record(std::move(y), {x}, [xi](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad_acc(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename Real>
Var<Real> concat_last(const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: no inputs");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.empty() || Shape(s.begin(), s.end() - 1) != lead) {
      throw ShapeError("concat_last: leading extents " + to_string(s) + " incompatible with " + to_string(lead));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  const std::size_t rows = numel(lead);
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor<Real> y(out_shape);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Real* src = parts[k].value().data();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(src + r * widths[k], widths[k], y.data() + r * total + off);
    off += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const auto& p : parts) ids.push_back(p.id());
  return parts[0].tape().record(std::move(y), parts, [ids, widths, rows, total](Tape<Real>& t, std::size_t self) {
    const Real* g = t.grad(self).data();
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) {
        Real* gx = t.grad_acc(ids[k]).data();
        for (std::size_t r = 0; r < rows; ++r) detail::axpy(widths[k], Real(1), g + r * total + off, gx + r * widths[k]);
      }
      off += widths[k];
    }
  });
}

template <typename Real>
Var<Real> slice_last(const Var<Real>& x, std::size_t begin, std::size_t width) {
  const std::size_t dim = detail::last_dim(x, "slice_last");
  if (begin + width > dim) {
    throw ShapeError("slice_last: range [" + std::to_string(begin) + ", " + std::to_string(begin + width) +
                     ") exceeds last extent " + std::to_string(dim));
  }
  Shape out_shape = x.shape();
  out_shape.back() = width;
  const std::size_t rows = x.value().size() / dim;
  Tensor<Real> y(out_shape);
  const Real* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv + r * dim + begin, width, y.data() + r * width);
  const std::size_t xi = x.id();
  return x.tape().record(std::move(y), {x}, [xi, rows, dim, begin, width](Tape<Real>& t, std::size_t self) {
    const Real* g = t.grad(self).data();
    Real* gx = t.grad_acc(xi).data();
    for (std::size_t r = 0; r < rows; ++r) detail::axpy(width, Real(1), g + r * width, gx + r * dim + begin);
  });
}

// ------------------------------------------------------------------- linear

/// y = x W + b over the last axis. W is stored (in, out).
template <typename Real>
Var<Real> linear(const Var<Real>& x, const Var<Real>& w, const std::optional<Var<Real>>& b = std::nullopt) {
  const std::size_t in = detail::last_dim(x, "linear");
  if (w.shape().size() != 2 || w.shape()[0] != in) {
    throw ShapeError("linear: input last extent " + std::to_string(in) + " does not match weight " + to_string(w.shape()));
  }
  const std::size_t out = w.shape()[1];
  if (b && b->shape() != Shape{out}) {
    throw ShapeError("linear: bias " + to_string(b->shape()) + " does not match output extent " + std::to_string(out));
  }
  const std::size_t rows = x.value().size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out;
  Tensor<Real> y(out_shape);
  const Real* xv = x.value().data();
  const Real* wv = w.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    Real* yr = y.data() + r * out;
    if (b) std::copy_n(b->value().data(), out, yr);
    const Real* xr = xv + r * in;
    for (std::size_t i = 0; i < in; ++i) detail::axpy(out, xr[i], wv + i * out, yr);
  }
  std::vector<Var<Real>> parents{x, w};
  if (b) parents.push_back(*b);
  const std::size_t xi = x.id(), wi = w.id();
  const std::optional<std::size_t> bi = b ? std::optional<std::size_t>(b->id()) : std::nullopt;
  return x.tape().record(std::move(y), parents, [xi, wi, bi, rows, in, out](Tape<Real>& t, std::size_t self) {
    const Real* g = t.grad(self).data();
    if (t.needs_grad(xi)) {
      const Real* wv = t.value(wi).data();
      std::vector<Real> wt(in * out);
      for (std::size_t i = 0; i < in; ++i)
        for (std::size_t o = 0; o < out; ++o) wt[o * in + i] = wv[i * out + o];
      Real* gx = t.grad_acc(xi).data();
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* gr = g + r * out;
        Real* gxr = gx + r * in;
        for (std::size_t o = 0; o < out; ++o) detail::axpy(in, gr[o], wt.data() + o * in, gxr);
      }
    }
    if (t.needs_grad(wi)) {
      const Real* xv = t.value(xi).data();
      Real* gw = t.grad_acc(wi).data();
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* xr = xv + r * in;
        const Real* gr = g + r * out;
        for (std::size_t i = 0; i < in; ++i) detail::axpy(out, xr[i], gr, gw + i * out);
      }
    }
    if (bi && t.needs_grad(*bi)) {
      Real* gb = t.grad_acc(*bi).data();
      for (std::size_t r = 0; r < rows; ++r) detail::axpy(out, Real(1), g + r * out, gb);
    }
  });
}

template <typename Real>
Var<Real> linear(const Var<Real>& x, const Var<Real>& w, const Var<Real>& b) {
  return linear(x, w, std::optional<Var<Real>>(b));
}

// ------------------------------------------------------------ normalization

template <typename Real>
Var<Real> layer_norm(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta, Real eps = Real(1e-5)) {
  const std::size_t dim = detail::last_dim(x, "layer_norm");
  if (gamma.shape() != Shape{dim} || beta.shape() != Shape{dim}) {
    throw ShapeError("layer_norm: affine params " + to_string(gamma.shape()) + "/" + to_string(beta.shape()) +
                     " do not match last extent " + std::to_string(dim));
  }
  const std::size_t rows = x.value().size() / dim;
  auto xhat = std::make_shared<std::vector<Real>>(x.value().size());
  auto inv_std = std::make_shared<std::vector<Real>>(rows);
  Tensor<Real> y(x.shape());
  const Real* xv = x.value().data();
  const Real* gv = gamma.value().data();
  const Real* bv = beta.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = xv + r * dim;
    Real mu = 0;
    for (std::size_t d = 0; d < dim; ++d) mu += xr[d];
    mu /= static_cast<Real>(dim);
    Real var = 0;
    for (std::size_t d = 0; d < dim; ++d) var += (xr[d] - mu) * (xr[d] - mu);
    var /= static_cast<Real>(dim);
    const Real is = Real(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    Real* hr = xhat->data() + r * dim;
    Real* yr = y.data() + r * dim;
    for (std::size_t d = 0; d < dim; ++d) {
      hr[d] = (xr[d] - mu) * is;
      yr[d] = gv[d] * hr[d] + bv[d];
    }
  }
  const std::size_t xi = x.id(), gi = gamma.id(), bi = beta.id();
  return x.tape().record(std::move(y), {x, gamma, beta},
                         [xi, gi, bi, rows, dim, xhat, inv_std](Tape<Real>& t, std::size_t self) {
    const Real* g = t.grad(self).data();
    if (t.needs_grad(gi)) {
      Real* gg = t.grad_acc(gi).data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t d = 0; d < dim; ++d) gg[d] += g[r * dim + d] * (*xhat)[r * dim + d];
    }
    if (t.needs_grad(bi)) {
      Real* gb = t.grad_acc(bi).data();
      for (std::size_t r = 0; r < rows; ++r) detail::axpy(dim, Real(1), g + r * dim, gb);
    }
    if (t.needs_grad(xi)) {
      const Real* gv = t.value(gi).data();
      Real* gx = t.grad_acc(xi).data();
      std::vector<Real> dh(dim);
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* hr = xhat->data() + r * dim;
        Real m1 = 0, m2 = 0;
        for (std::size_t d = 0; d < dim; ++d) {
          dh[d] = g[r * dim + d] * gv[d];
          m1 += dh[d];
          m2 += dh[d] * hr[d];
        }
        m1 /= static_cast<Real>(dim);
        m2 /= static_cast<Real>(dim);
        const Real is = (*inv_std)[r];
        for (std::size_t d = 0; d < dim; ++d) gx[r * dim + d] += is * (dh[d] - m1 - hr[d] * m2);
      }
    }
  });
}

// Softmax over the last axis with max subtraction.
template <typename Real>
Var<Real> softmax(const Var<Real>& x) {
  const std::size_t dim = detail::last_dim(x, "softmax");
  const std::size_t rows = x.value().size() / dim;
  Tensor<Real> y(x.shape());
  const Real* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = xv + r * dim;
    Real* yr = y.data() + r * dim;
    const Real mx = *std::max_element(xr, xr + dim);
    Real z = 0;
    for (std::size_t d = 0; d < dim; ++d) z += (yr[d] = std::exp(xr[d] - mx));
    for (std::size_t d = 0; d < dim; ++d) yr[d] /= z;
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(y), {x}, [xi, rows, dim](Tape<Real>& t, std::size_t self) {
    const Real* g = t.grad(self).data();
    const Real* yv = t.value(self).data();
    Real* gx = t.grad_acc(xi).data();
    for (std::size_t r = 0; r < rows; ++r) {
      Real dotp = 0;
      for (std::size_t d = 0; d < dim; ++d) dotp += g[r * dim + d] * yv[r * dim + d];
      for (std::size_t d = 0; d < dim; ++d) gx[r * dim + d] += yv[r * dim + d] * (g[r * dim + d] - dotp);
    }
  });
}

// ---------------------------------------------------------------- attention

enum class AttentionAxis { Spatial, Temporal };

/// Multi-head scaled dot-product attention along one axis of a token grid.
///
/// qkv has shape (B, C, N, 3w) laid out as [q | k | v] with `heads` heads of
/// width w/heads each. Spatial attends across C independently per (b, n);
/// Temporal attends across N independently per (b, c). Output (B, C, N, w).
/// If `probs_out` is given it receives the attention rows, one per query.
template <typename Real>
Var<Real> axis_attention(const Var<Real>& qkv, std::size_t heads, AttentionAxis axis,
                         std::vector<Real>* probs_out = nullptr) {
  const auto& s = qkv.shape();
  if (s.size() != 4 || s[3] % 3 != 0 || heads == 0 || (s[3] / 3) % heads != 0) {
    throw ShapeError("axis_attention: qkv " + to_string(s) + " incompatible with " + std::to_string(heads) + " heads");
  }
  const std::size_t B = s[0], C = s[1], N = s[2], w = s[3] / 3, hd = w / heads;
  const bool spatial = axis == AttentionAxis::Spatial;
  const std::size_t n_seq = spatial ? B * N : B * C;
  const std::size_t len = spatial ? C : N;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hd));
  // Token index of position i in sequence q.
  auto token = [=](std::size_t seq, std::size_t i) -> std::size_t {
    if (spatial) {
      const std::size_t b = seq / N, n = seq % N;
      return (b * C + i) * N + n;
    }
    return seq * N + i;
  };
  auto probs = std::make_shared<std::vector<Real>>(n_seq * heads * len * len);
  Tensor<Real> y(Shape{B, C, N, w});
  const Real* x = qkv.value().data();
  const std::size_t stride = 3 * w;
  std::vector<Real> row(len);
  for (std::size_t q = 0; q < n_seq; ++q) {
    for (std::size_t h = 0; h < heads; ++h) {
      Real* P = probs->data() + ((q * heads + h) * len) * len;
      for (std::size_t i = 0; i < len; ++i) {
        const Real* qi = x + token(q, i) * stride + h * hd;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < len; ++j) {
          const Real* kj = x + token(q, j) * stride + w + h * hd;
          Real acc = 0;
          for (std::size_t e = 0; e < hd; ++e) acc += qi[e] * kj[e];
          row[j] = acc * scale;
          mx = std::max(mx, row[j]);
        }
        Real z = 0;
        for (std::size_t j = 0; j < len; ++j) z += (row[j] = std::exp(row[j] - mx));
        Real* yi = y.data() + token(q, i) * w + h * hd;
        for (std::size_t j = 0; j < len; ++j) {
          P[i * len + j] = row[j] / z;
          detail::axpy(hd, P[i * len + j], x + token(q, j) * stride + 2 * w + h * hd, yi);
        }
      }
    }
  }
  if (probs_out) *probs_out = *probs;
  const std::size_t xi = qkv.id();
  return qkv.tape().record(std::move(y), {qkv}, [=](Tape<Real>& t, std::size_t self) {
    const Real* g = t.grad(self).data();
    const Real* x = t.value(xi).data();
    Real* gx = t.grad_acc(xi).data();
    std::vector<Real> dp(len);
    for (std::size_t q = 0; q < n_seq; ++q) {
      for (std::size_t h = 0; h < heads; ++h) {
        const Real* P = probs->data() + ((q * heads + h) * len) * len;
        for (std::size_t i = 0; i < len; ++i) {
          const Real* gi = g + token(q, i) * w + h * hd;
          const std::size_t ti = token(q, i) * stride;
          Real rowdot = 0;
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t tj = token(q, j) * stride;
            const Real* vj = x + tj + 2 * w + h * hd;
            Real acc = 0;
            for (std::size_t e = 0; e < hd; ++e) acc += gi[e] * vj[e];
            dp[j] = acc;
            rowdot += P[i * len + j] * acc;
            // dV_j += p_ij * dY_i
            detail::axpy(hd, P[i * len + j], gi, gx + tj + 2 * w + h * hd);
          }
          for (std::size_t j = 0; j < len; ++j) {
            const Real ds = P[i * len + j] * (dp[j] - rowdot) * scale;
            const std::size_t tj = token(q, j) * stride;
            detail::axpy(hd, ds, x + tj + w + h * hd, gx + ti + h * hd);  // dQ_i
            detail::axpy(hd, ds, x + ti + h * hd, gx + tj + w + h * hd);  // dK_j
          }
        }
      }
    }
  });
}

// ------------------------------------------------------------- convolutions

/// 1-D convolution. x (M, Cin, L), w (Cout, Cin, K), b (Cout) -> (M, Cout, Lout).
template <typename Real>
Var<Real> conv1d(const Var<Real>& x, const Var<Real>& w, const Var<Real>& b, std::size_t stride, std::size_t pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 3 || ws[1] != xs[1] || b.shape() != Shape{ws[0]} || stride == 0) {
    throw ShapeError("conv1d: input " + to_string(xs) + ", weight " + to_string(ws) + ", bias " + to_string(b.shape()));
  }
  const std::size_t M = xs[0], Cin = xs[1], L = xs[2], Cout = ws[0], K = ws[2];
  if (L + 2 * pad < K) throw ShapeError("conv1d: kernel " + std::to_string(K) + " longer than padded input");
  const std::size_t Lout = (L + 2 * pad - K) / stride + 1;
  Tensor<Real> y(Shape{M, Cout, Lout});
  const Real* xv = x.value().data();
  const Real* wv = w.value().data();
  const Real* bv = b.value().data();
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t o = 0; o < Cout; ++o) {
      Real* yr = y.data() + (m * Cout + o) * Lout;
      for (std::size_t p = 0; p < Lout; ++p) {
        Real acc = bv[o];
        for (std::size_t c = 0; c < Cin; ++c) {
          const Real* xr = xv + (m * Cin + c) * L;
          const Real* wr = wv + (o * Cin + c) * K;
          for (std::size_t k = 0; k < K; ++k) {
            const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(p * stride + k) - static_cast<std::ptrdiff_t>(pad);
            if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(L)) acc += wr[k] * xr[pos];
          }
        }
        yr[p] = acc;
      }
    }
  }
  const std::size_t xi = x.id(), wi = w.id(), bi = b.id();
  return x.tape().record(std::move(y), {x, w, b}, [=](Tape<Real>& t, std::size_t self) {
    const Real* g = t.grad(self).data();
    const Real* xv = t.value(xi).data();
    const Real* wv = t.value(wi).data();
    Real* gx = t.needs_grad(xi) ? t.grad_acc(xi).data() : nullptr;
    Real* gw = t.needs_grad(wi) ? t.grad_acc(wi).data() : nullptr;
    Real* gb = t.needs_grad(bi) ? t.grad_acc(bi).data() : nullptr;
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t o = 0; o < Cout; ++o) {
        const Real* gr = g + (m * Cout + o) * Lout;
        for (std::size_t p = 0; p < Lout; ++p) {
          const Real gp = gr[p];
          if (gb) gb[o] += gp;
          for (std::size_t c = 0; c < Cin; ++c) {
            const std::size_t xoff = (m * Cin + c) * L;
            const std::size_t woff = (o * Cin + c) * K;
            for (std::size_t k = 0; k < K; ++k) {
              const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(p * stride + k) - static_cast<std::ptrdiff_t>(pad);
              if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(L)) continue;
              if (gw) gw[woff + k] += gp * xv[xoff + pos];
              if (gx) gx[xoff + pos] += gp * wv[woff + k];
            }
          }
        }
      }
    }
  });
}

/// Depthwise 2-D convolution with same padding over a channels-last grid.
/// x (B, H, W, D), kernel (kh, kw, D), bias (D); kh and kw odd.
template <typename Real>
Var<Real> depthwise_conv2d(const Var<Real>& x, const Var<Real>& kernel, const Var<Real>& bias) {
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  if (xs.size() != 4 || ks.size() != 3 || ks[2] != xs[3] || bias.shape() != Shape{xs[3]} || ks[0] % 2 == 0 ||
      ks[1] % 2 == 0) {
    throw ShapeError("depthwise_conv2d: input " + to_string(xs) + ", kernel " + to_string(ks) + ", bias " +
                     to_string(bias.shape()));
  }
  const std::size_t B = xs[0], H = xs[1], W = xs[2], D = xs[3], kh = ks[0], kw = ks[1];
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2), pw = static_cast<std::ptrdiff_t>(kw / 2);
  Tensor<Real> y(xs);
  const Real* xv = x.value().data();
  const Real* kv = kernel.value().data();
  const Real* bv = bias.value().data();
  auto in_range = [](std::ptrdiff_t v, std::size_t n) { return v >= 0 && v < static_cast<std::ptrdiff_t>(n); };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t c = 0; c < W; ++c) {
        Real* yr = y.data() + ((b * H + h) * W + c) * D;
        std::copy_n(bv, D, yr);
        for (std::size_t i = 0; i < kh; ++i) {
          const std::ptrdiff_t hh = static_cast<std::ptrdiff_t>(h + i) - ph;
          if (!in_range(hh, H)) continue;
          for (std::size_t j = 0; j < kw; ++j) {
            const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c + j) - pw;
            if (!in_range(cc, W)) continue;
            const Real* xr = xv + ((b * H + hh) * W + cc) * D;
            const Real* kr = kv + (i * kw + j) * D;
            for (std::size_t d = 0; d < D; ++d) yr[d] += kr[d] * xr[d];
          }
        }
      }
  const std::size_t xi = x.id(), ki = kernel.id(), bi = bias.id();
  return x.tape().record(std::move(y), {x, kernel, bias}, [=](Tape<Real>& t, std::size_t self) {
    const Real* g = t.grad(self).data();
    const Real* xv = t.value(xi).data();
    const Real* kv = t.value(ki).data();
    Real* gx = t.needs_grad(xi) ? t.grad_acc(xi).data() : nullptr;
    Real* gk = t.needs_grad(ki) ? t.grad_acc(ki).data() : nullptr;
    Real* gb = t.needs_grad(bi) ? t.grad_acc(bi).data() : nullptr;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t c = 0; c < W; ++c) {
          const Real* gr = g + ((b * H + h) * W + c) * D;
          if (gb) detail::axpy(D, Real(1), gr, gb);
          for (std::size_t i = 0; i < kh; ++i) {
            const std::ptrdiff_t hh = static_cast<std::ptrdiff_t>(h + i) - ph;
            if (!in_range(hh, H)) continue;
            for (std::size_t j = 0; j < kw; ++j) {
              const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c + j) - pw;
              if (!in_range(cc, W)) continue;
              const std::size_t xoff = ((b * H + hh) * W + cc) * D;
              const std::size_t koff = (i * kw + j) * D;
              for (std::size_t d = 0; d < D; ++d) {
                if (gk) gk[koff + d] += gr[d] * xv[xoff + d];
                if (gx) gx[xoff + d] += gr[d] * kv[koff + d];
              }
            }
          }
        }
  });
}

// ------------------------------------------------------------ FFT front-end

/// Magnitudes of the one-sided real DFT over the last axis:
/// (..., P) -> (..., P/2 + 1). The subgradient at a zero-magnitude bin is 0.
template <typename Real>
Var<Real> rfft_magnitude(const Var<Real>& x) {
  const std::size_t P = detail::last_dim(x, "rfft_magnitude");
  auto dft = std::make_shared<RealDft<Real>>(P);
  const std::size_t K = dft->bins();
  const std::size_t rows = x.value().size() / P;
  Shape out_shape = x.shape();
  out_shape.back() = K;
  Tensor<Real> y(out_shape);
  auto re = std::make_shared<std::vector<Real>>(rows * K);
  auto im = std::make_shared<std::vector<Real>>(rows * K);
  const Real* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    dft->transform(xv + r * P, re->data() + r * K, im->data() + r * K);
    for (std::size_t k = 0; k < K; ++k) {
      const Real a = (*re)[r * K + k], c = (*im)[r * K + k];
      y[r * K + k] = std::sqrt(a * a + c * c);
    }
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(y), {x}, [=](Tape<Real>& t, std::size_t self) {
    const Real* g = t.grad(self).data();
    const Real* yv = t.value(self).data();
    Real* gx = t.grad_acc(xi).data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < K; ++k) {
        const Real mag = yv[r * K + k];
        if (mag == Real(0)) continue;
        const Real cr = g[r * K + k] * (*re)[r * K + k] / mag;
        const Real ci = g[r * K + k] * (*im)[r * K + k] / mag;
        Real* gr = gx + r * P;
        for (std::size_t n = 0; n < P; ++n) gr[n] += cr * dft->cos_at(k, n) - ci * dft->sin_at(k, n);
      }
    }
  });
}

// ------------------------------------------------------------------- fusion

/// Per-row weighted sum: w (B, K) and K reps of shape (B, d) -> (B, d).
template <typename Real>
Var<Real> weighted_sum(const Var<Real>& w, const std::vector<Var<Real>>& reps) {
  const auto& ws = w.shape();
  if (ws.size() != 2 || ws[1] != reps.size() || reps.empty()) {
    throw ShapeError("weighted_sum: weights " + to_string(ws) + " for " + std::to_string(reps.size()) + " reps");
  }
  const std::size_t B = ws[0], K = ws[1];
  const Shape rs = reps[0].shape();
  if (rs.size() != 2 || rs[0] != B) throw ShapeError("weighted_sum: rep shape " + to_string(rs));
  for (const auto& r : reps) {
    if (r.shape() != rs) throw ShapeError("weighted_sum: rep dims differ " + to_string(r.shape()) + " vs " + to_string(rs));
  }
  const std::size_t d = rs[1];
  Tensor<Real> y(Shape{B, d});
  const Real* wv = w.value().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k) detail::axpy(d, wv[b * K + k], reps[k].value().data() + b * d, y.data() + b * d);
  std::vector<Var<Real>> parents{w};
  std::vector<std::size_t> ids;
  for (const auto& r : reps) {
    parents.push_back(r);
    ids.push_back(r.id());
  }
  const std::size_t wi = w.id();
  return w.tape().record(std::move(y), parents, [=](Tape<Real>& t, std::size_t self) {
    const Real* g = t.grad(self).data();
    const Real* wv = t.value(wi).data();
    if (t.needs_grad(wi)) {
      Real* gw = t.grad_acc(wi).data();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) {
          const Real* hr = t.value(ids[k]).data() + b * d;
          Real acc = 0;
          for (std::size_t e = 0; e < d; ++e) acc += g[b * d + e] * hr[e];
          gw[b * K + k] += acc;
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (!t.needs_grad(ids[k])) continue;
      Real* gh = t.grad_acc(ids[k]).data();
      for (std::size_t b = 0; b < B; ++b) detail::axpy(d, wv[b * K + k], g + b * d, gh + b * d);
    }
  });
}

// ------------------------------------------------------------------- losses

/// Mean over all elements of (a - b)^2.
template <typename Real>
Var<Real> mse_loss(const Var<Real>& a, const Var<Real>& b) {
  auto& tape = detail::same_tape(a, b, "mse_loss");
  detail::require_same_shape(a, b, "mse_loss");
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t n = av.size();
  Real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += (av[i] - bv[i]) * (av[i] - bv[i]);
  const std::size_t ai = a.id(), bi = b.id();
  return tape.record(Tensor<Real>(Shape{}, acc / static_cast<Real>(n)), {a, b}, [=](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0] * Real(2) / static_cast<Real>(n);
    const auto& av = t.value(ai);
    const auto& bv = t.value(bi);
    if (t.needs_grad(ai)) {
      auto& ga = t.grad_acc(ai);
      for (std::size_t i = 0; i < n; ++i) ga[i] += g * (av[i] - bv[i]);
    }
    if (t.needs_grad(bi)) {
      auto& gb = t.grad_acc(bi);
      for (std::size_t i = 0; i < n; ++i) gb[i] -= g * (av[i] - bv[i]);
    }
  });
}

/// Mean over rows of the squared L2 distance along the last axis.
template <typename Real>
Var<Real> squared_l2_loss(const Var<Real>& a, const Var<Real>& b) {
  detail::require_same_shape(a, b, "squared_l2_loss");
  const std::size_t rows = a.value().size() / detail::last_dim(a, "squared_l2_loss");
  return scale(mse_loss(a, b), static_cast<Real>(a.value().size()) / static_cast<Real>(rows));
}

/// Mean over rows of 1 - cos(a_r, b_r). Zero-norm rows raise NumericalError.
template <typename Real>
Var<Real> cosine_embedding_loss(const Var<Real>& a, const Var<Real>& b) {
  auto& tape = detail::same_tape(a, b, "cosine_embedding_loss");
  detail::require_same_shape(a, b, "cosine_embedding_loss");
  const std::size_t d = detail::last_dim(a, "cosine_embedding_loss");
  const std::size_t rows = a.value().size() / d;
  auto stats = std::make_shared<std::vector<Real>>(rows * 3);  // |a|, |b|, cos
  const Real* av = a.value().data();
  const Real* bv = b.value().data();
  Real total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    Real aa = 0, bb = 0, ab = 0;
    for (std::size_t e = 0; e < d; ++e) {
      aa += av[r * d + e] * av[r * d + e];
      bb += bv[r * d + e] * bv[r * d + e];
      ab += av[r * d + e] * bv[r * d + e];
    }
    if (!(aa > Real(0)) || !(bb > Real(0))) {
      throw NumericalError("cosine_embedding_loss: zero-norm vector in row " + std::to_string(r) +
                           " (collapsed representation)");
    }
    const Real na = std::sqrt(aa), nb = std::sqrt(bb);
    const Real c = ab / (na * nb);
    (*stats)[3 * r] = na;
    (*stats)[3 * r + 1] = nb;
    (*stats)[3 * r + 2] = c;
    total += Real(1) - c;
  }
  const std::size_t ai = a.id(), bi = b.id();
  return tape.record(Tensor<Real>(Shape{}, total / static_cast<Real>(rows)), {a, b},
                     [=](Tape<Real>& t, std::size_t self) {
    const Real g = -t.grad(self)[0] / static_cast<Real>(rows);
    const Real* av = t.value(ai).data();
    const Real* bv = t.value(bi).data();
    Real* ga = t.needs_grad(ai) ? t.grad_acc(ai).data() : nullptr;
    Real* gb = t.needs_grad(bi) ? t.grad_acc(bi).data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const Real na = (*stats)[3 * r], nb = (*stats)[3 * r + 1], c = (*stats)[3 * r + 2];
      for (std::size_t e = 0; e < d; ++e) {
        const Real x = av[r * d + e], y = bv[r * d + e];
        if (ga) ga[r * d + e] += g * (y / (na * nb) - c * x / (na * na));
        if (gb) gb[r * d + e] += g * (x / (na * nb) - c * y / (nb * nb));
      }
    }
  });
}

/// Mean cross-entropy of logits (B, K) against integer labels with optional
/// label smoothing: target = (1 - s) onehot + s / K.
template <typename Real>
Var<Real> cross_entropy(const Var<Real>& logits, std::span<const int> labels, Real smoothing = Real(0)) {
  const auto& s = logits.shape();
  if (s.size() != 2 || s[0] != labels.size()) {
    throw ShapeError("cross_entropy: logits " + to_string(s) + " for " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t B = s[0], K = s[1];
  auto probs = std::make_shared<std::vector<Real>>(B * K);
  auto targets = std::make_shared<std::vector<Real>>(B * K, smoothing / static_cast<Real>(K));
  const Real* x = logits.value().data();
  Real total = 0;
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= K) {
      throw ShapeError("cross_entropy: label " + std::to_string(labels[b]) + " outside [0, " + std::to_string(K) + ")");
    }
    (*targets)[b * K + static_cast<std::size_t>(labels[b])] += Real(1) - smoothing;
    const Real* xr = x + b * K;
    const Real mx = *std::max_element(xr, xr + K);
    Real z = 0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(xr[k] - mx);
    const Real lse = mx + std::log(z);
    for (std::size_t k = 0; k < K; ++k) {
      (*probs)[b * K + k] = std::exp(xr[k] - lse);
      total -= (*targets)[b * K + k] * (xr[k] - lse);
    }
  }
  const std::size_t li = logits.id();
  return logits.tape().record(Tensor<Real>(Shape{}, total / static_cast<Real>(B)), {logits},
                              [=](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0] / static_cast<Real>(B);
    Real* gx = t.grad_acc(li).data();
    for (std::size_t i = 0; i < B * K; ++i) gx[i] += g * ((*probs)[i] - (*targets)[i]);
  });
}

// ------------------------------------------------------------------ dropout

template <typename Real>
Var<Real> dropout(const Var<Real>& x, Real p, Stream& rng) {
  if (p <= Real(0)) return x;
  const Real keep_scale = Real(1) / (Real(1) - p);
  auto mask = std::make_shared<std::vector<Real>>(x.value().size());
  Tensor<Real> y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) {
    (*mask)[i] = rng.uniform() < static_cast<double>(p) ? Real(0) : keep_scale;
    y[i] *= (*mask)[i];
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(y), {x}, [xi, mask](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad_acc(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

}  // namespace mtdp::nk
