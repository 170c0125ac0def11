#include "mtdp/eval/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtdp/eval/metrics.hpp"
#include "mtdp/numkernel/optim.hpp"

namespace mtdp::eval {

std::vector<GridPoint> FinetuneConfig::grid() const {
  std::vector<GridPoint> g;
  for (double lr : backbone_lrs)
    for (bool m : multi_lr) g.push_back({lr, m});
  if (g.empty()) throw ConfigError("fine-tuning grid is empty");
  return g;
}

ClassifierHead::ClassifierHead(std::size_t channels, std::size_t n_patches, std::size_t d_model, std::size_t n_classes,
                               nk::Stream rng) {
  fc1_ = nk::Linear<float>(params_, "cls.fc1", channels * n_patches * d_model, n_patches * d_model, rng);
  fc2_ = nk::Linear<float>(params_, "cls.fc2", n_patches * d_model, d_model, rng);
  fc3_ = nk::Linear<float>(params_, "cls.fc3", d_model, n_classes, rng);
}

nk::Var<float> ClassifierHead::operator()(nk::Tape<float>& tape, const nk::Var<float>& grid, float dropout,
                                          nk::Stream* rng) const {
  const auto& s = grid.shape();
  auto h = nk::reshape(grid, {s[0], fc1_.in_features()});
  h = nk::elu(fc1_(tape, h));
  if (rng) h = nk::dropout(h, dropout, *rng);
  h = nk::elu(fc2_(tape, h));
  if (rng) h = nk::dropout(h, dropout, *rng);
  return fc3_(tape, h);
}

namespace {

using Snapshot = std::vector<nk::Tensor<float>>;

Snapshot snapshot(const std::vector<nk::Parameter<float>*>& params) {
  Snapshot s;
  for (auto* p : params) s.push_back(p->value);
  return s;
}

void restore(const std::vector<nk::Parameter<float>*>& params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s[i];
}

nk::Tensor<float> batch_of(const data::SegmentStore& store, std::span<const std::size_t> rows) {
  const std::size_t ct = std::size_t(store.channels()) * store.timesteps();
  nk::Tensor<float> x({rows.size(), store.channels(), store.timesteps()});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(store.segment(rows[i]).data.data(), ct, x.data() + i * ct);
  return x;
}

std::vector<double> predict(const student::Encoder<float>& enc, const ClassifierHead& head,
                            const data::SegmentStore& store, std::span<const std::size_t> rows, std::size_t K) {
  constexpr std::size_t kChunk = 64;
  std::vector<double> probs(rows.size() * K);
  for (std::size_t b = 0; b < rows.size(); b += kChunk) {
    const auto part = rows.subspan(b, std::min(kChunk, rows.size() - b));
    nk::Tape<float> tape;
    tape.set_grad_enabled(false);
    const auto p = nk::softmax(head(tape, enc.encode(tape, tape.constant(batch_of(store, part))), 0.0f, nullptr));
    for (std::size_t i = 0; i < part.size() * K; ++i) probs[b * K + i] = p.value()[i];
  }
  return probs;
}

std::vector<int> labels_of(const data::SegmentStore& store, std::span<const std::size_t> rows) {
  std::vector<int> y;
  for (auto r : rows) y.push_back(store.label(r));
  return y;
}

}  // namespace

FinetuneResult finetune(const student::Encoder<float>& pretrained, const data::SegmentStore& store,
                        const SplitRows& split, std::size_t K, const FinetuneConfig& cfg) {
  const auto grid = cfg.grid();
  if (cfg.epochs == 0 || cfg.batch_size == 0) throw ConfigError("fine-tuning needs epochs >= 1 and batch_size >= 1");
  if (split.train.empty() || split.val.empty() || split.test.empty()) {
    throw std::invalid_argument("fine-tuning needs non-empty train, val and test splits");
  }
  const auto& scfg = pretrained.config();
  const auto smoothing = static_cast<float>(cfg.smoothing_for(K));
  const std::vector<int> ytr = labels_of(store, split.train), yva = labels_of(store, split.val),
                         yte = labels_of(store, split.test);
  const nk::Stream root(cfg.seed);
  const std::size_t n = split.train.size();
  const std::uint64_t total = std::uint64_t((n + cfg.batch_size - 1) / cfg.batch_size) * cfg.epochs;

  FinetuneResult out;
  double best_run_acc = -1;
  for (const auto& point : grid) {
    student::Encoder<float> enc(scfg, nk::Stream(0));
    student::copy_param_values(pretrained.params(), enc.params());
    ClassifierHead head(scfg.channels, scfg.n_patches(), scfg.d_model, K, root.split("head"));
    const auto enc_params = enc.params().all();
    const auto head_params = head.params().all();
    auto all = enc_params;
    all.insert(all.end(), head_params.begin(), head_params.end());

    nk::OptimizerConfig back_cfg;
    back_cfg.lr_max = point.backbone_lr;
    back_cfg.lr_min = std::min(cfg.lr_min, point.backbone_lr);
    back_cfg.weight_decay = cfg.weight_decay;
    back_cfg.total_steps = total;
    nk::OptimizerConfig head_cfg = back_cfg;
    head_cfg.lr_max = cfg.head_lr(point);
    head_cfg.lr_min = std::min(cfg.lr_min, head_cfg.lr_max);
    back_cfg.validate();
    head_cfg.validate();

    FinetuneRun run{point, head_cfg.lr_max, 0, -1};
    Snapshot best;
    std::vector<std::size_t> order(n), rows;
    std::vector<int> yb;
    std::uint64_t step = 0;
    for (std::uint32_t e = 0; e < cfg.epochs; ++e) {
      std::iota(order.begin(), order.end(), 0);
      nk::Stream srng = root.split("order").split(e);
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[srng.uniform_int(i)]);
      for (std::size_t b = 0; b < n; b += cfg.batch_size, ++step) {
        const std::size_t B = std::min<std::size_t>(cfg.batch_size, n - b);
        rows.clear();
        yb.clear();
        for (std::size_t i = 0; i < B; ++i) {
          rows.push_back(split.train[order[b + i]]);
          yb.push_back(ytr[order[b + i]]);
        }
        nk::Tape<float> tape;
        nk::Stream drop = root.split("dropout").split(step);
        const auto logits = head(tape, enc.encode(tape, tape.constant(batch_of(store, rows)), &drop),
                                 static_cast<float>(cfg.dropout), &drop);
        const auto loss = nk::cross_entropy(logits, yb, smoothing);
        if (!std::isfinite(loss.value()[0])) {
          throw NumericalError("fine-tuning: non-finite loss", static_cast<std::int64_t>(step));
        }
        for (auto* p : all) p->zero_grad();
        tape.backward(loss);
        const double norm = nk::clip_grad_norm<float>(all, cfg.clip_norm);
        if (!std::isfinite(norm)) throw NumericalError("fine-tuning: non-finite gradient", static_cast<std::int64_t>(step));
        const double lr_b = nk::cosine_annealing_lr(step, back_cfg), lr_h = nk::cosine_annealing_lr(step, head_cfg);
        for (auto* p : enc_params) nk::adamw_step(*p, back_cfg, lr_b);
        for (auto* p : head_params) nk::adamw_step(*p, head_cfg, lr_h);
      }
      const double acc = balanced_accuracy(yva, [&] {
        const auto p = predict(enc, head, store, split.val, K);
        std::vector<int> pred(yva.size());
        for (std::size_t i = 0; i < pred.size(); ++i)
          pred[i] = static_cast<int>(std::max_element(p.begin() + i * K, p.begin() + (i + 1) * K) - (p.begin() + i * K));
        return pred;
      }(), K);
      if (acc > run.best_val_accuracy) {
        run.best_val_accuracy = acc;
        run.best_epoch = e;
        best = snapshot(all);
      }
    }
    out.runs.push_back(run);
    if (run.best_val_accuracy > best_run_acc) {
      best_run_acc = run.best_val_accuracy;
      restore(all, best);
      auto& r = out.result;
      r.n_classes = K;
      r.val_metrics = compute_metrics(yva, predict(enc, head, store, split.val, K), K);
      r.test_metrics = compute_metrics(yte, predict(enc, head, store, split.test, K), K);
      r.chosen = {{"backbone_lr", point.backbone_lr},
                  {"head_lr", run.head_lr},
                  {"multi_lr", point.multi_lr ? 1.0 : 0.0},
                  {"epoch", static_cast<double>(run.best_epoch)}};
    }
  }
  return out;
}

}  // namespace mtdp::eval
