#pragma once

#include <cstdint>
#include <vector>

#include "mtdp/eval/probe.hpp"

namespace mtdp::eval {

struct GridPoint {
  double backbone_lr = 0;
  bool multi_lr = false;
};

struct FinetuneConfig {
  std::vector<double> backbone_lrs = {5e-5, 1e-4, 5e-4};
  std::vector<bool> multi_lr = {true, false};
  /// With multi-LR on, the classifier learns this many times faster.
  double head_lr_factor = 5.0;
  std::uint32_t epochs = 50;
  std::uint32_t batch_size = 64;
  double dropout = 0.1;
  /// Applied to multiclass tasks only.
  double label_smoothing = 0.1;
  double lr_min = 1e-6;
  double weight_decay = 5e-2;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;

  /// backbone_lrs × multi_lr, in that nesting order. Throws ConfigError when empty.
  std::vector<GridPoint> grid() const;
  double head_lr(const GridPoint& g) const { return g.multi_lr ? head_lr_factor * g.backbone_lr : g.backbone_lr; }
  double smoothing_for(std::size_t n_classes) const { return n_classes > 2 ? label_smoothing : 0.0; }
};

/// Flattened token grid → Linear(C·Np·d, Np·d) → ELU → dropout →
/// Linear(Np·d, d) → ELU → dropout → Linear(d, K).
class ClassifierHead {
 public:
  ClassifierHead(std::size_t channels, std::size_t n_patches, std::size_t d_model, std::size_t n_classes,
                 nk::Stream init_rng);
  nk::Var<float> operator()(nk::Tape<float>& tape, const nk::Var<float>& grid, float dropout, nk::Stream* rng) const;
  nk::ParamSet<float>& params() { return params_; }
  const nk::ParamSet<float>& params() const { return params_; }

 private:
  nk::ParamSet<float> params_;
  nk::Linear<float> fc1_, fc2_, fc3_;
};

struct FinetuneRun {
  GridPoint point;
  double head_lr = 0;
  std::uint32_t best_epoch = 0;
  double best_val_accuracy = 0;
};

struct FinetuneResult {
  AdaptationResult result;
  std::vector<FinetuneRun> runs;
};

/// Trains a copy of `pretrained` jointly with a fresh classifier head for each
/// grid point, keeps the epoch with the best validation balanced accuracy
/// (earliest on ties), picks the grid point the same way, and reports that
/// checkpoint on the test rows. `pretrained` is not modified.
FinetuneResult finetune(const student::Encoder<float>& pretrained, const data::SegmentStore& store,
                        const SplitRows& split, std::size_t n_classes, const FinetuneConfig& cfg);

}  // namespace mtdp::eval
