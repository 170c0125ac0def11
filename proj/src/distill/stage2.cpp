#include "mtdp/distill/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mtdp::distill {

using nk::Tensor;

ProjectionHead::ProjectionHead(std::size_t d_model, std::size_t d_fuse, nk::Stream rng)
    : params(std::make_unique<nk::ParamSet<float>>()) {
  linear = nk::Linear<float>(*params, "proj", d_model, d_fuse, rng);
}

ProjectionHead::ProjectionHead(std::unique_ptr<nk::ParamSet<float>> loaded) : params(std::move(loaded)) {
  auto* w = params->find("proj.weight");
  auto* bias = params->find("proj.bias");
  if (!w || !bias || params->size() != 2 || w->value.rank() != 2 || bias->value.shape() != nk::Shape{w->value.extent(1)}) {
    throw ConfigError("student checkpoint has no valid projection head (proj.weight, proj.bias)");
  }
  linear = nk::Linear<float>::bind(*w, bias);
}

Tensor<float> fused_targets(const Gate<float>& gate, const std::vector<const teach::RepCache*>& clean,
                            std::span<const std::size_t> rows) {
  return gate.fused_of(gather_rows(clean, rows));
}

Tensor<float> gather_segments(const data::SegmentStore& store, std::span<const std::size_t> rows) {
  const std::size_t ct = std::size_t(store.channels()) * store.timesteps();
  Tensor<float> x({rows.size(), store.channels(), store.timesteps()});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(store.segment(rows[i]).data.data(), ct, x.data() + i * ct);
  return x;
}

double mean_cosine(const student::Encoder<float>& enc, const ProjectionHead& proj, const data::SegmentStore& store,
                   std::span<const std::size_t> store_rows, const Tensor<float>& targets) {
  constexpr std::size_t kChunk = 64;
  const std::size_t d = targets.shape()[1];
  double total = 0;
  for (std::size_t b = 0; b < store_rows.size(); b += kChunk) {
    const auto rows = store_rows.subspan(b, std::min(kChunk, store_rows.size() - b));
    nk::Tape<float> tape;
    tape.set_grad_enabled(false);
    const auto q = proj.linear(tape, enc.pool(enc.encode(tape, tape.constant(gather_segments(store, rows))))).value();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double dot = 0, qq = 0, tt = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const double a = q[i * d + j], t = targets[(b + i) * d + j];
        dot += a * t;
        qq += a * a;
        tt += t * t;
      }
      total += dot / std::sqrt(qq * tt);
    }
  }
  return total / static_cast<double>(store_rows.size());
}

namespace {

struct Rows {
  std::vector<std::size_t> store, cache;
};

Rows resolve(const data::SegmentStore& store, const teach::RepCache& cache, std::span<const std::string> ids) {
  Rows r;
  std::unordered_map<std::string, std::size_t> cache_index;
  for (std::size_t i = 0; i < cache.size(); ++i) cache_index.emplace(cache.id(i), i);
  for (const auto& id : ids) {
    r.store.push_back(store.index_of(id));
    auto it = cache_index.find(id);
    if (it == cache_index.end()) throw std::invalid_argument("no teacher representation cached for sample " + id);
    r.cache.push_back(it->second);
  }
  return r;
}

}  // namespace

Stage2Result train_student(const data::SegmentStore& store, const std::vector<const teach::RepCache*>& clean,
                           const Gate<float>& gate, const student::StudentConfig& scfg, const Stage2Config& cfg,
                           std::span<const std::string> train_ids, std::span<const std::string> heldout_ids) {
  check_aligned(clean);
  if (train_ids.empty()) throw std::invalid_argument("train_student: no training samples");
  if (cfg.batch_size == 0 || cfg.epochs == 0) throw ConfigError("stage2 needs batch_size >= 1 and epochs >= 1");
  if (scfg.channels != store.channels() || scfg.timesteps != store.timesteps()) {
    throw ConfigError("student (C, T) = (" + std::to_string(scfg.channels) + ", " + std::to_string(scfg.timesteps) +
                      ") does not match the data (" + std::to_string(store.channels()) + ", " +
                      std::to_string(store.timesteps()) + ")");
  }
  const Rows train = resolve(store, *clean.front(), train_ids);
  const Rows held = resolve(store, *clean.front(), heldout_ids);
  const Tensor<float> train_targets = fused_targets(gate, clean, train.cache);
  const Tensor<float> held_targets = fused_targets(gate, clean, held.cache);
  const std::size_t d_fuse = gate.config().d_fuse();

  const nk::Stream root(cfg.seed);
  Stage2Result out;
  out.student = std::make_unique<student::Encoder<float>>(scfg, root.split("init").split("student"));
  out.proj = std::make_unique<ProjectionHead>(scfg.d_model, d_fuse, root.split("init").split("proj"));

  const std::size_t n = train.store.size();
  const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  std::uint64_t total = std::uint64_t(per_epoch) * cfg.epochs;
  if (cfg.max_steps) total = std::min(total, cfg.max_steps);
  auto optim_cfg = cfg.optim;
  optim_cfg.total_steps = total;
  auto params = out.student->params().all();
  for (auto* p : out.proj->params->all()) params.push_back(p);
  nk::AdamW<float> opt(params, optim_cfg);

  auto evaluate = [&](std::uint64_t step) {
    if (!held.store.empty())
      out.heldout.emplace_back(step, mean_cosine(*out.student, *out.proj, store, held.store, held_targets));
  };

  std::vector<std::size_t> order(n);
  std::vector<std::size_t> srows, trows;
  std::uint64_t step = 0;
  nk::Stream drop = root.split("dropout");
  for (std::uint32_t e = 0; e < cfg.epochs && step < total; ++e) {
    std::iota(order.begin(), order.end(), 0);
    nk::Stream srng = root.split("order").split(e);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[srng.uniform_int(i)]);
    for (std::size_t b = 0; b < n && step < total; b += cfg.batch_size) {
      const std::size_t B = std::min<std::size_t>(cfg.batch_size, n - b);
      srows.clear();
      Tensor<float> target({B, d_fuse});
      for (std::size_t i = 0; i < B; ++i) {
        srows.push_back(train.store[order[b + i]]);
        std::copy_n(train_targets.data() + order[b + i] * d_fuse, d_fuse, target.data() + i * d_fuse);
      }
      const double lr = nk::cosine_annealing_lr(step, optim_cfg);
      nk::Tape<float> tape;
      nk::Stream step_drop = drop.split(step);
      const auto x = tape.constant(gather_segments(store, srows));
      const auto q = out.proj->linear(tape, out.student->pool(out.student->encode(tape, x, &step_drop)));
      nk::Var<float> loss;
      try {
        loss = nk::cosine_embedding_loss(q, tape.constant(target));
      } catch (const NumericalError& err) {
        throw NumericalError(std::string("stage 2: ") + err.what(), static_cast<std::int64_t>(step));
      }
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) throw NumericalError("stage 2: non-finite distillation loss", static_cast<std::int64_t>(step));
      opt.zero_grad();
      tape.backward(loss);
      opt.step(lr, static_cast<std::int64_t>(step));
      out.trace.push_back({step, lr, lv});
      ++step;
      if (cfg.eval_every && step % cfg.eval_every == 0 && step < total) evaluate(step);
    }
  }
  evaluate(step);
  return out;
}

}  // namespace mtdp::distill
