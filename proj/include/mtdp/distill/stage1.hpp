#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "mtdp/distill/gate.hpp"
#include "mtdp/numkernel/optim.hpp"
#include "mtdp/teachers/precompute.hpp"

namespace mtdp::distill {

struct TrainRecord {
  std::uint64_t step;
  double lr;
  double loss;
};

/// CSV with header "step,lr,loss"; values printed with 17 significant digits.
void write_loss_csv(const std::vector<TrainRecord>& trace, const std::filesystem::path& path);
std::vector<TrainRecord> read_loss_csv(const std::filesystem::path& path);
/// Trailing moving average over `window` records.
std::vector<double> smooth_losses(const std::vector<TrainRecord>& trace, std::size_t window);

struct Stage1Config {
  /// 0 means the default budget: 1 epoch, raised to 5 below 10^4 samples.
  std::uint32_t epochs = 0;
  std::uint32_t batch_size = 32;
  /// Constant learning rate lr_max; lr_min and total_steps are ignored.
  nk::OptimizerConfig optim;
  std::uint64_t seed = 0;
  std::uint32_t hidden = 0;
  bool zero_init_output = false;

  std::uint32_t resolved_epochs(std::size_t n_samples) const {
    return epochs ? epochs : (n_samples < 10000 ? 5 : 1);
  }
};

struct WeightReport {
  std::vector<std::string> teachers;
  std::vector<double> mean;                  // K
  std::vector<std::vector<float>> per_sample;  // n × K
  std::vector<std::vector<std::size_t>> histogram;  // K × 10 bins over [0, 1]
};

struct Stage1Result {
  std::unique_ptr<Gate<float>> gate;
  std::vector<TrainRecord> trace;
  WeightReport weights;
};

/// Trains ψ and the heads jointly on the masked latent denoising loss. Epoch
/// e reads masked view e mod V. Throws NumericalError on a non-finite loss.
Stage1Result train_gate(const std::vector<teach::TeacherCaches>& caches, const Stage1Config& cfg);

/// Per-sample gate weights on the given (typically clean) caches and their mean.
WeightReport mean_gate_weights(const Gate<float>& gate, const std::vector<const teach::RepCache*>& reps);

/// Rows of each cache for `rows`, as (B, d_k) tensors.
std::vector<nk::Tensor<float>> gather_rows(const std::vector<const teach::RepCache*>& caches,
                                           std::span<const std::size_t> rows);

/// Throws std::invalid_argument unless all caches list the same ids in the same order.
void check_aligned(const std::vector<const teach::RepCache*>& caches);

}  // namespace mtdp::distill
