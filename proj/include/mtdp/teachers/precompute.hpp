#pragma once

#include <vector>

#include "mtdp/dataio/segment.hpp"
#include "mtdp/masking/mask.hpp"
#include "mtdp/teachers/adapters.hpp"
#include "mtdp/teachers/rep_cache.hpp"

namespace mtdp::teach {

struct PrecomputeOptions {
  mask::MaskingConfig masking;
  std::uint64_t mask_seed = 0;
  /// Independent masked views; Stage 1 visits view (epoch mod views) so each
  /// pass over the data sees a fresh mask.
  std::uint32_t views = 1;
  /// Use the all-ones mask (masked caches then equal the clean one).
  bool identity_mask = false;
};

/// The mask for sample `id` in masked view `view`. Every teacher and the
/// extractor export draw from this so one x̃ feeds all teachers.
std::pair<mask::MaskSpec, mask::BinaryMask> view_mask(const data::SegmentStore& store, const std::string& id,
                                                      std::uint32_t view, const PrecomputeOptions& opts);

struct TeacherCaches {
  RepCache clean;
  std::vector<RepCache> masked;  // one per view
};

/// Embeds every sample clean and under each view's mask, per teacher.
std::vector<TeacherCaches> precompute_reps(const data::SegmentStore& store, const std::vector<const Teacher*>& teachers,
                                           const PrecomputeOptions& opts);

}  // namespace mtdp::teach
