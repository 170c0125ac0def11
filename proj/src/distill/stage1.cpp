#include "mtdp/distill/stage1.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mtdp::distill {

void write_loss_csv(const std::vector<TrainRecord>& trace, const std::filesystem::path& path) {
  std::string text = "step,lr,loss\n";
  char line[96];
  for (const auto& r : trace) {
    std::snprintf(line, sizeof line, "%llu,%.17g,%.17g\n", static_cast<unsigned long long>(r.step), r.lr, r.loss);
    text += line;
  }
  data::write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<TrainRecord> read_loss_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data::MissingArtifactError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "step,lr,loss") throw data::FormatError(data::FormatError::Kind::Malformed, path.string() + ": bad header");
  std::vector<TrainRecord> out;
  while (std::getline(in, line)) {
    TrainRecord r{};
    unsigned long long step = 0;
    if (std::sscanf(line.c_str(), "%llu,%lf,%lf", &step, &r.lr, &r.loss) != 3) {
      throw data::FormatError(data::FormatError::Kind::Malformed, path.string() + ": bad row '" + line + "'");
    }
    r.step = step;
    out.push_back(r);
  }
  return out;
}

std::vector<double> smooth_losses(const std::vector<TrainRecord>& trace, std::size_t window) {
  std::vector<double> out;
  double sum = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    sum += trace[i].loss;
    if (i >= window) sum -= trace[i - window].loss;
    out.push_back(sum / static_cast<double>(std::min(i + 1, window)));
  }
  return out;
}

void check_aligned(const std::vector<const teach::RepCache*>& caches) {
  if (caches.empty()) throw std::invalid_argument("no teacher caches given");
  for (const auto* c : caches) {
    if (c->ids() != caches.front()->ids()) {
      throw std::invalid_argument("cache for " + c->teacher() + " does not list the same samples as " +
                                  caches.front()->teacher());
    }
  }
}

std::vector<nk::Tensor<float>> gather_rows(const std::vector<const teach::RepCache*>& caches,
                                           std::span<const std::size_t> rows) {
  std::vector<nk::Tensor<float>> out;
  for (const auto* c : caches) {
    nk::Tensor<float> t({rows.size(), c->dim()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = c->row(rows[i]);
      std::copy(r.begin(), r.end(), t.data() + i * c->dim());
    }
    out.push_back(std::move(t));
  }
  return out;
}

Stage1Result train_gate(const std::vector<teach::TeacherCaches>& caches, const Stage1Config& cfg) {
  if (caches.empty()) throw std::invalid_argument("train_gate: no teachers");
  if (cfg.batch_size == 0) throw ConfigError("stage1.batch_size must be >= 1");
  const std::size_t views = caches.front().masked.size();
  std::vector<const teach::RepCache*> clean;
  GateConfig gcfg;
  gcfg.hidden = cfg.hidden;
  for (const auto& tc : caches) {
    if (tc.masked.size() != views || views == 0) {
      throw std::invalid_argument("train_gate: every teacher needs the same number (>= 1) of masked views");
    }
    clean.push_back(&tc.clean);
    gcfg.teachers.push_back(tc.clean.teacher());
    gcfg.dims.push_back(tc.clean.dim());
  }
  check_aligned(clean);
  for (std::size_t v = 0; v < views; ++v) {
    std::vector<const teach::RepCache*> all(clean);
    for (const auto& tc : caches) {
      if (!tc.masked[v].masked()) throw std::invalid_argument("train_gate: masked view cache not flagged masked");
      all.push_back(&tc.masked[v]);
    }
    check_aligned(all);
  }

  const nk::Stream root(cfg.seed);
  Stage1Result out;
  out.gate = std::make_unique<Gate<float>>(gcfg, root.split("init"), cfg.zero_init_output);
  auto optim_cfg = cfg.optim;
  optim_cfg.lr_min = optim_cfg.lr_max;
  nk::AdamW<float> opt(out.gate->params().all(), optim_cfg);

  const std::size_t n = clean.front()->size();
  const std::uint32_t epochs = cfg.resolved_epochs(n);
  std::vector<std::size_t> order(n);
  std::uint64_t step = 0;
  for (std::uint32_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    nk::Stream srng = root.split("order").split(e);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[srng.uniform_int(i)]);
    std::vector<const teach::RepCache*> masked;
    for (const auto& tc : caches) masked.push_back(&tc.masked[e % views]);
    for (std::size_t b = 0; b < n; b += cfg.batch_size) {
      const std::span<const std::size_t> rows(order.data() + b, std::min<std::size_t>(cfg.batch_size, n - b));
      const auto xm = gather_rows(masked, rows);
      const auto xc = gather_rows(clean, rows);
      nk::Tape<float> tape;
      std::vector<nk::Var<float>> vm, vc;
      for (const auto& t : xm) vm.push_back(tape.constant(t));
      for (const auto& t : xc) vc.push_back(tape.constant(t));
      const auto loss = out.gate->denoise_loss(tape, vm, vc);
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) throw NumericalError("stage 1: non-finite denoising loss", static_cast<std::int64_t>(step));
      opt.zero_grad();
      tape.backward(loss);
      opt.step(optim_cfg.lr_max, static_cast<std::int64_t>(step));
      out.trace.push_back({step, optim_cfg.lr_max, lv});
      ++step;
    }
  }
  out.weights = mean_gate_weights(*out.gate, clean);
  return out;
}

WeightReport mean_gate_weights(const Gate<float>& gate, const std::vector<const teach::RepCache*>& reps) {
  check_aligned(reps);
  const std::size_t K = gate.config().k(), n = reps.front()->size();
  WeightReport r;
  r.teachers = gate.config().teachers;
  r.histogram.assign(K, std::vector<std::size_t>(10, 0));
  std::vector<double> sum(K, 0.0);
  constexpr std::size_t kChunk = 256;
  std::vector<std::size_t> rows;
  for (std::size_t b = 0; b < n; b += kChunk) {
    rows.resize(std::min(kChunk, n - b));
    std::iota(rows.begin(), rows.end(), b);
    const auto w = gate.weights_of(gather_rows(reps, rows));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::vector<float> wi(w.data() + i * K, w.data() + (i + 1) * K);
      for (std::size_t k = 0; k < K; ++k) {
        sum[k] += wi[k];
        r.histogram[k][std::min<std::size_t>(9, static_cast<std::size_t>(wi[k] * 10.0f))]++;
      }
      r.per_sample.push_back(std::move(wi));
    }
  }
  for (double s : sum) r.mean.push_back(s / static_cast<double>(n));
  return r;
}

}  // namespace mtdp::distill
