#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mtdp/dataio/segment.hpp"
#include "mtdp/distill/stage1.hpp"
#include "mtdp/student/encoder.hpp"

namespace mtdp::distill {

struct Stage2Config {
  std::uint32_t epochs = 40;
  std::uint32_t batch_size = 32;
  /// Stop after this many steps (0: run all epochs). The cosine schedule
  /// spans min(epochs × batches, max_steps).
  std::uint64_t max_steps = 0;
  nk::OptimizerConfig optim;
  std::uint64_t seed = 0;
  /// Held-out cosine is measured every `eval_every` steps (0: only at the end).
  std::uint64_t eval_every = 0;
};

/// q_ζ: d_model → d_fuse, stored after the encoder in the student checkpoint.
struct ProjectionHead {
  std::unique_ptr<nk::ParamSet<float>> params;
  nk::Linear<float> linear;

  ProjectionHead(std::size_t d_model, std::size_t d_fuse, nk::Stream rng);
  /// Wraps loaded parameters named proj.weight / proj.bias.
  explicit ProjectionHead(std::unique_ptr<nk::ParamSet<float>> loaded);
};

struct Stage2Result {
  std::unique_ptr<student::Encoder<float>> student;
  std::unique_ptr<ProjectionHead> proj;
  std::vector<TrainRecord> trace;
  /// (step, mean held-out cosine) pairs; the last entry is the final model.
  std::vector<std::pair<std::uint64_t, double>> heldout;
};

/// Fused targets Σ w_k h_k with w from the frozen gate on clean reps, one row
/// per entry of `rows` (cache row indices).
nk::Tensor<float> fused_targets(const Gate<float>& gate, const std::vector<const teach::RepCache*>& clean,
                                std::span<const std::size_t> rows);

/// (B, C, T) batch of segments.
nk::Tensor<float> gather_segments(const data::SegmentStore& store, std::span<const std::size_t> rows);

/// Mean cosine similarity between q(pool(student(x))) and the target rows.
double mean_cosine(const student::Encoder<float>& enc, const ProjectionHead& proj, const data::SegmentStore& store,
                   std::span<const std::size_t> store_rows, const nk::Tensor<float>& targets);

/// Trains the student and projection head on 1 − cos(q(pool(f(x))), h_fused).
/// The gate is only read. Throws NumericalError (with the step) on a
/// non-finite loss or a collapsed (zero-norm) projection.
Stage2Result train_student(const data::SegmentStore& store, const std::vector<const teach::RepCache*>& clean,
                           const Gate<float>& gate, const student::StudentConfig& scfg, const Stage2Config& cfg,
                           std::span<const std::string> train_ids, std::span<const std::string> heldout_ids = {});

}  // namespace mtdp::distill
