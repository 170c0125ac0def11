#include "mtdp/eval/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mtdp/eval/metrics.hpp"

namespace mtdp::eval {

Features Features::select(std::span<const std::size_t> idx) const {
  Features out{idx.size(), cols, std::vector<double>(idx.size() * cols)};
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) throw std::out_of_range("feature row " + std::to_string(idx[i]) + " out of range");
    std::copy_n(x.data() + idx[i] * cols, cols, out.x.data() + i * cols);
  }
  return out;
}

Features extract_features(const student::Encoder<float>& enc, const data::SegmentStore& store) {
  constexpr std::size_t kChunk = 64;
  const std::size_t C = store.channels(), T = store.timesteps(), d = enc.config().d_model;
  if (enc.config().channels != C || enc.config().timesteps != T) {
    throw ConfigError("encoder input shape does not match the segment store");
  }
  Features f{store.size(), d, std::vector<double>(store.size() * d)};
  for (std::size_t b = 0; b < store.size(); b += kChunk) {
    const std::size_t B = std::min(kChunk, store.size() - b);
    nk::Tensor<float> x({B, C, T});
    for (std::size_t i = 0; i < B; ++i) std::copy_n(store.segment(b + i).data.data(), C * T, x.data() + i * C * T);
    const auto h = enc.embed(x);
    for (std::size_t i = 0; i < B * d; ++i) f.x[b * d + i] = h[i];
  }
  return f;
}

namespace {

Features standardize(const Features& f, std::span<const double> mean, std::span<const double> scale) {
  Features z = f;
  for (std::size_t i = 0; i < f.rows; ++i)
    for (std::size_t j = 0; j < f.cols; ++j) z.x[i * f.cols + j] = (f.x[i * f.cols + j] - mean[j]) / scale[j];
  return z;
}

double norm(std::span<const double> v) {
  double s = 0;
  for (double a : v) s += a * a;
  return std::sqrt(s);
}

}  // namespace

double logistic_objective(const Features& z, std::span<const int> y, std::size_t K, double l2,
                          std::span<const double> wb, std::vector<double>* grad) {
  const std::size_t N = z.rows, D = z.cols;
  const double* w = wb.data();
  const double* b = wb.data() + D * K;
  if (grad) grad->assign(D * K + K, 0.0);
  std::vector<double> logits(K);
  double loss = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const auto xi = z.row(i);
    for (std::size_t k = 0; k < K; ++k) logits[k] = b[k];
    for (std::size_t j = 0; j < D; ++j)
      for (std::size_t k = 0; k < K; ++k) logits[k] += xi[j] * w[j * K + k];
    const double mx = *std::max_element(logits.begin(), logits.end());
    double zsum = 0;
    for (double l : logits) zsum += std::exp(l - mx);
    const double lse = mx + std::log(zsum);
    loss += lse - logits[static_cast<std::size_t>(y[i])];
    if (grad) {
      for (std::size_t k = 0; k < K; ++k) {
        const double r = (std::exp(logits[k] - lse) - (static_cast<std::size_t>(y[i]) == k ? 1.0 : 0.0)) / N;
        for (std::size_t j = 0; j < D; ++j) (*grad)[j * K + k] += r * xi[j];
        (*grad)[D * K + k] += r;
      }
    }
  }
  loss /= static_cast<double>(N);
  double reg = 0;
  for (std::size_t i = 0; i < D * K; ++i) {
    reg += w[i] * w[i];
    if (grad) (*grad)[i] += l2 * w[i];
  }
  return loss + 0.5 * l2 * reg;
}

std::vector<double> LogisticModel::predict_proba(const Features& f) const {
  if (f.cols != n_features) throw std::invalid_argument("probe: feature width mismatch");
  const Features z = standardize(f, mean, scale);
  std::vector<double> out(f.rows * n_classes);
  const std::size_t K = n_classes;
  for (std::size_t i = 0; i < f.rows; ++i) {
    double* p = out.data() + i * K;
    for (std::size_t k = 0; k < K; ++k) p[k] = b[k];
    const auto xi = z.row(i);
    for (std::size_t j = 0; j < n_features; ++j)
      for (std::size_t k = 0; k < K; ++k) p[k] += xi[j] * w[j * K + k];
    const double mx = *std::max_element(p, p + K);
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) s += (p[k] = std::exp(p[k] - mx));
    for (std::size_t k = 0; k < K; ++k) p[k] /= s;
  }
  return out;
}

LogisticModel fit_logistic(const Features& f, std::span<const int> y, std::size_t K, double l2, const ProbeConfig& cfg) {
  if (f.rows != y.size() || f.rows == 0) throw std::invalid_argument("probe: feature rows and labels differ");
  if (!(l2 >= 0)) throw ConfigError("probe: l2 must be >= 0");
  std::vector<std::size_t> counts(K, 0);
  for (int c : y) {
    if (c < 0 || static_cast<std::size_t>(c) >= K) throw std::invalid_argument("probe: label out of range");
    ++counts[static_cast<std::size_t>(c)];
  }
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
    throw std::invalid_argument("probe: training split contains a single class");
  }

  LogisticModel m;
  m.n_features = f.cols;
  m.n_classes = K;
  m.l2 = l2;
  m.mean.assign(f.cols, 0.0);
  m.scale.assign(f.cols, 0.0);
  for (std::size_t i = 0; i < f.rows; ++i)
    for (std::size_t j = 0; j < f.cols; ++j) m.mean[j] += f.x[i * f.cols + j] / static_cast<double>(f.rows);
  for (std::size_t i = 0; i < f.rows; ++i)
    for (std::size_t j = 0; j < f.cols; ++j) {
      const double c = f.x[i * f.cols + j] - m.mean[j];
      m.scale[j] += c * c / static_cast<double>(f.rows);
    }
  for (auto& s : m.scale) s = s > 1e-24 ? std::sqrt(s) : 1.0;  // constant features stay at zero
  const Features z = standardize(f, m.mean, m.scale);

  const std::size_t P = f.cols * K + K;
  std::vector<double> x(P, 0.0), g, x_new(P), g_new;
  double fx = logistic_objective(z, y, K, l2, x, &g);
  double step = 1.0;
  std::size_t it = 0;
  for (; it < cfg.max_iter && norm(g) >= cfg.grad_tol; ++it) {
    const double gg = norm(g) * norm(g);
    double t = step;
    double f_new = 0;
    for (int bt = 0;; ++bt) {
      for (std::size_t i = 0; i < P; ++i) x_new[i] = x[i] - t * g[i];
      f_new = logistic_objective(z, y, K, l2, x_new, &g_new);
      if (f_new <= fx - 1e-4 * t * gg) break;
      t *= 0.5;
      if (bt > 60) break;  // step underflow: at numerical precision of the objective
    }
    if (!(f_new <= fx)) break;
    // Barzilai-Borwein step s·s / s·y for the next trial.
    double ss = 0, sy = 0;
    for (std::size_t i = 0; i < P; ++i) {
      const double s = x_new[i] - x[i], d = g_new[i] - g[i];
      ss += s * s;
      sy += s * d;
    }
    step = sy > 0 ? std::clamp(ss / sy, 1e-10, 1e10) : t * 2.0;
    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
  }
  if (!std::isfinite(fx)) throw NumericalError("probe: non-finite objective", static_cast<std::int64_t>(it));
  m.w.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(f.cols * K));
  m.b.assign(x.begin() + static_cast<std::ptrdiff_t>(f.cols * K), x.end());
  m.loss = fx;
  m.grad_norm = norm(g);
  m.iterations = it;
  return m;
}

namespace {

std::vector<int> take(std::span<const int> labels, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels[i]);
  return out;
}

double log_loss(std::span<const double> probs, std::span<const int> y, std::size_t K) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s -= std::log(std::max(probs[i * K + static_cast<std::size_t>(y[i])], 1e-300));
  return s / static_cast<double>(y.size());
}

}  // namespace

SplitRows resolve_split(const data::SegmentStore& store, const data::TaskSplit& split) {
  split.validate(store);
  SplitRows r;
  for (const auto& id : split.train) r.train.push_back(store.index_of(id));
  for (const auto& id : split.val) r.val.push_back(store.index_of(id));
  for (const auto& id : split.test) r.test.push_back(store.index_of(id));
  return r;
}

AdaptationResult linear_probe(const Features& f, std::span<const int> labels, const SplitRows& split,
                              std::size_t K, const ProbeConfig& cfg, LogisticModel* model_out) {
  if (labels.size() != f.rows) throw std::invalid_argument("probe: one label per feature row required");
  const Features tr = f.select(split.train), va = f.select(split.val), te = f.select(split.test);
  const auto ytr = take(labels, split.train), yva = take(labels, split.val), yte = take(labels, split.test);
  std::vector<double> grid = cfg.l2_grid.empty() ? std::vector<double>{cfg.l2} : cfg.l2_grid;

  LogisticModel best;
  double best_acc = -1, best_loss = std::numeric_limits<double>::infinity();
  std::map<std::string, double> best_val;
  for (double l2 : grid) {
    auto m = fit_logistic(tr, ytr, K, l2, cfg);
    if (yva.empty()) {
      if (l2 == grid.front()) best = std::move(m);
      continue;
    }
    const auto p = m.predict_proba(va);
    auto vm = compute_metrics(yva, p, K);
    const double acc = vm.at("balanced_accuracy"), loss = log_loss(p, yva, K);
    const bool better = acc > best_acc || (acc == best_acc && loss < best_loss) ||
                        (acc == best_acc && loss == best_loss && l2 < best.l2);
    if (better) {
      best_acc = acc;
      best_loss = loss;
      best_val = std::move(vm);
      best = std::move(m);
    }
  }
  AdaptationResult r;
  r.n_classes = K;
  r.val_metrics = best_val;
  r.test_metrics = compute_metrics(yte, best.predict_proba(te), K);
  r.chosen["l2"] = best.l2;
  if (model_out) *model_out = std::move(best);
  return r;
}

}  // namespace mtdp::eval
