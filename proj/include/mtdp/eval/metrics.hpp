#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace mtdp::eval {

/// Row = true class, column = predicted class.
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                                       std::size_t n_classes);

/// Mean per-class recall over the classes present in y_true. Absent classes
/// are skipped and, if `warnings` is given, named there.
double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes = 0,
                         std::vector<std::string>* warnings = nullptr);

/// (p_o − p_e) / (1 − p_e); 0 when p_e == 1.
double cohen_kappa(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes = 0);

/// Support-weighted per-class F1; a class with no predicted and no true
/// positives contributes F1 = 0.
double weighted_f1(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes = 0);

/// Mann-Whitney rank statistic, ties count ½. Labels must be 0/1 with both present.
double auroc(std::span<const int> y_true, std::span<const double> scores);

/// Average precision: Σ over distinct thresholds (descending) of
/// (R_t − R_{t−1}) · P_t.
double auc_pr(std::span<const int> y_true, std::span<const double> scores);

/// Binary tasks: balanced_accuracy, auc_pr, auroc. Multiclass:
/// balanced_accuracy, cohen_kappa, weighted_f1.
std::vector<std::string> metric_names(std::size_t n_classes);

/// Metrics from class probabilities (N × K row-major). Predictions are the
/// argmax (lowest index on ties); binary scores are P(class 1).
std::map<std::string, double> compute_metrics(std::span<const int> y_true, std::span<const double> probs,
                                              std::size_t n_classes);

}  // namespace mtdp::eval
