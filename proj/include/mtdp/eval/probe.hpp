#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "mtdp/dataio/segment.hpp"
#include "mtdp/student/encoder.hpp"

namespace mtdp::eval {

/// Row-major sample × feature matrix.
struct Features {
  std::size_t rows = 0, cols = 0;
  std::vector<double> x;

  std::span<const double> row(std::size_t i) const { return {x.data() + i * cols, cols}; }
  Features select(std::span<const std::size_t> idx) const;
};

/// Pooled d_model vector per stored sample, in store order. Runs in chunks
/// with gradients off; the encoder is only read.
Features extract_features(const student::Encoder<float>& enc, const data::SegmentStore& store);

struct ProbeConfig {
  double l2 = 1e-4;
  std::size_t max_iter = 20000;
  double grad_tol = 1e-6;
  /// l2 values tried on the validation split; empty means just `l2`.
  std::vector<double> l2_grid = {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};
};

/// Multinomial logistic regression on standardized features.
/// Objective: mean cross-entropy + l2/2 · ||W||² (bias unpenalized).
struct LogisticModel {
  std::size_t n_features = 0, n_classes = 0;
  std::vector<double> mean, scale;  // standardization, per feature
  std::vector<double> w;            // (n_features × n_classes) row-major
  std::vector<double> b;            // n_classes
  double l2 = 0;
  double loss = 0;
  double grad_norm = 0;
  std::size_t iterations = 0;

  /// N × K class probabilities.
  std::vector<double> predict_proba(const Features& f) const;
};

/// Loss and gradient of the objective at (w, b) on already standardized
/// features; `grad` is laid out as w then b.
double logistic_objective(const Features& z, std::span<const int> y, std::size_t n_classes, double l2,
                          std::span<const double> wb, std::vector<double>* grad);

/// Full-batch gradient descent (Barzilai-Borwein trial step, Armijo
/// backtracking) until ||∇|| < grad_tol or max_iter. Throws on fewer than
/// two classes in `y`.
LogisticModel fit_logistic(const Features& f, std::span<const int> y, std::size_t n_classes, double l2,
                           const ProbeConfig& cfg = {});

/// Split membership as store row indices.
struct SplitRows {
  std::vector<std::size_t> train, val, test;
};
SplitRows resolve_split(const data::SegmentStore& store, const data::TaskSplit& split);

struct AdaptationResult {
  std::string task;
  std::size_t n_classes = 0;
  std::map<std::string, double> test_metrics;
  std::map<std::string, double> val_metrics;
  /// Chosen hyperparameters, selected on validation only.
  std::map<std::string, double> chosen;
};

/// Fits a probe per l2 in the grid on the train rows, keeps the one with the
/// best validation balanced accuracy (ties: lower validation loss, then the
/// smaller l2), and reports it on the test rows.
/// `labels` and the rows of `f` are indexed like the split rows.
AdaptationResult linear_probe(const Features& f, std::span<const int> labels, const SplitRows& split,
                              std::size_t n_classes, const ProbeConfig& cfg = {}, LogisticModel* model_out = nullptr);

}  // namespace mtdp::eval
