#include "mtdp/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mtdp::eval {

namespace {

std::size_t resolve_classes(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes) {
  if (y_true.size() != y_pred.size()) {
    throw std::invalid_argument("metric: " + std::to_string(y_true.size()) + " labels vs " +
                                std::to_string(y_pred.size()) + " predictions");
  }
  if (y_true.empty()) throw std::invalid_argument("metric: no samples");
  int mx = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_pred[i] < 0) throw std::invalid_argument("metric: negative class label");
    mx = std::max({mx, y_true[i], y_pred[i]});
  }
  if (n_classes == 0) return static_cast<std::size_t>(mx) + 1;
  if (static_cast<std::size_t>(mx) >= n_classes) {
    throw std::invalid_argument("metric: label " + std::to_string(mx) + " outside [0, " + std::to_string(n_classes) + ")");
  }
  return n_classes;
}

void check_binary(std::span<const int> y, std::span<const double> s) {
  if (y.size() != s.size()) throw std::invalid_argument("ranking metric: labels and scores differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) throw std::invalid_argument("ranking metric: labels must be 0/1");
    if (!std::isfinite(s[i])) throw std::invalid_argument("ranking metric: non-finite score");
    pos += static_cast<std::size_t>(y[i]);
  }
  if (pos == 0 || pos == y.size()) throw std::invalid_argument("ranking metric: both classes must be present");
}

}  // namespace

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                                       std::size_t n_classes) {
  const std::size_t K = resolve_classes(y_true, y_pred, n_classes);
  std::vector<std::vector<std::size_t>> cm(K, std::vector<std::size_t>(K, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) ++cm[y_true[i]][y_pred[i]];
  return cm;
}

double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes,
                         std::vector<std::string>* warnings) {
  const auto cm = confusion_matrix(y_true, y_pred, n_classes);
  double total = 0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < cm.size(); ++k) {
    const std::size_t support = std::accumulate(cm[k].begin(), cm[k].end(), std::size_t{0});
    if (support == 0) {
      if (warnings) warnings->push_back("balanced accuracy: class " + std::to_string(k) + " absent from y_true");
      continue;
    }
    total += static_cast<double>(cm[k][k]) / static_cast<double>(support);
    ++present;
  }
  return total / static_cast<double>(present);
}

double cohen_kappa(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes) {
  const auto cm = confusion_matrix(y_true, y_pred, n_classes);
  const double n = static_cast<double>(y_true.size());
  double agree = 0, chance = 0;
  for (std::size_t k = 0; k < cm.size(); ++k) {
    double row = 0, col = 0;
    for (std::size_t j = 0; j < cm.size(); ++j) {
      row += static_cast<double>(cm[k][j]);
      col += static_cast<double>(cm[j][k]);
    }
    agree += static_cast<double>(cm[k][k]);
    chance += row * col;
  }
  const double p_o = agree / n, p_e = chance / (n * n);
  if (p_e == 1.0) return 0.0;
  return (p_o - p_e) / (1.0 - p_e);
}

double weighted_f1(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes) {
  const auto cm = confusion_matrix(y_true, y_pred, n_classes);
  double total = 0;
  for (std::size_t k = 0; k < cm.size(); ++k) {
    double support = 0, predicted = 0;
    for (std::size_t j = 0; j < cm.size(); ++j) {
      support += static_cast<double>(cm[k][j]);
      predicted += static_cast<double>(cm[j][k]);
    }
    const double tp = static_cast<double>(cm[k][k]);
    // F1 = 2TP / (2TP + FP + FN) = 2TP / (support + predicted).
    if (support + predicted > 0) total += support * (2.0 * tp / (support + predicted));
  }
  return total / static_cast<double>(y_true.size());
}

double auroc(std::span<const int> y_true, std::span<const double> scores) {
  check_binary(y_true, scores);
  const std::size_t n = y_true.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks (1-based) for tied groups.
  double rank_sum = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (y_true[idx[t]] == 1) {
        rank_sum += mid;
        ++n_pos;
      }
    }
    i = j;
  }
  const double p = static_cast<double>(n_pos), q = static_cast<double>(n - n_pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double auc_pr(std::span<const int> y_true, std::span<const double> scores) {
  check_binary(y_true, scores);
  const std::size_t n = y_true.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t n_pos = 0;
  for (int y : y_true) n_pos += static_cast<std::size_t>(y);
  double ap = 0, prev_recall = 0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) {
      tp += static_cast<std::size_t>(y_true[idx[j]]);
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    ap += (recall - prev_recall) * static_cast<double>(tp) / static_cast<double>(seen);
    prev_recall = recall;
    i = j;
  }
  return ap;
}

std::vector<std::string> metric_names(std::size_t n_classes) {
  if (n_classes < 2) throw std::invalid_argument("metric set needs at least 2 classes");
  if (n_classes == 2) return {"balanced_accuracy", "auc_pr", "auroc"};
  return {"balanced_accuracy", "cohen_kappa", "weighted_f1"};
}

std::map<std::string, double> compute_metrics(std::span<const int> y_true, std::span<const double> probs,
                                              std::size_t n_classes) {
  if (probs.size() != y_true.size() * n_classes) throw std::invalid_argument("compute_metrics: probability matrix shape");
  std::vector<int> pred(y_true.size());
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const auto row = probs.subspan(i * n_classes, n_classes);
    pred[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  std::map<std::string, double> out;
  out["balanced_accuracy"] = balanced_accuracy(y_true, pred, n_classes);
  if (n_classes == 2) {
    std::vector<double> s(y_true.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = probs[i * 2 + 1];
    out["auc_pr"] = auc_pr(y_true, s);
    out["auroc"] = auroc(y_true, s);
  } else {
    out["cohen_kappa"] = cohen_kappa(y_true, pred, n_classes);
    out["weighted_f1"] = weighted_f1(y_true, pred, n_classes);
  }
  return out;
}

}  // namespace mtdp::eval
