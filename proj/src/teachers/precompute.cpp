#include "mtdp/teachers/precompute.hpp"

#include <stdexcept>

namespace mtdp::teach {

std::pair<mask::MaskSpec, mask::BinaryMask> view_mask(const data::SegmentStore& store, const std::string& id,
                                                      std::uint32_t view, const PrecomputeOptions& opts) {
  if (opts.identity_mask) return {mask::MaskSpec{}, mask::BinaryMask::ones(store.channels(), store.timesteps())};
  nk::Stream rng = nk::Stream(opts.mask_seed).split("mask-view").split(view).split(id);
  return mask::sample_mask(store.channels(), store.timesteps(), store.fs(), rng, opts.masking);
}

std::vector<TeacherCaches> precompute_reps(const data::SegmentStore& store, const std::vector<const Teacher*>& teachers,
                                           const PrecomputeOptions& opts) {
  if (store.size() == 0) throw std::invalid_argument("precompute: empty segment store");
  if (opts.views == 0) throw std::invalid_argument("precompute: need at least one masked view");
  std::vector<TeacherCaches> out;
  for (const Teacher* t : teachers) {
    TeacherCaches tc{RepCache(t->name(), t->dim(), false), {}};
    for (std::uint32_t v = 0; v < opts.views; ++v) tc.masked.emplace_back(t->name(), t->dim(), true);
    out.push_back(std::move(tc));
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& id = store.id(i);
    const auto& x = store.segment(i);
    for (std::size_t k = 0; k < teachers.size(); ++k) out[k].clean.add(id, teachers[k]->embed(x, id));
    for (std::uint32_t v = 0; v < opts.views; ++v) {
      const auto xt = mask::apply_mask(x, view_mask(store, id, v, opts).second);
      for (std::size_t k = 0; k < teachers.size(); ++k) out[k].masked[v].add(id, teachers[k]->embed(xt, id));
    }
  }
  return out;
}

}  // namespace mtdp::teach
