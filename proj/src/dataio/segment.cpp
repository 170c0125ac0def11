#include "mtdp/dataio/segment.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace mtdp::data {

EegSegment::EegSegment(std::uint32_t c, std::uint32_t t, float fs_, std::vector<float> values, bool normalized_)
    : channels(c), timesteps(t), fs(fs_), data(std::move(values)), normalized(normalized_) {
  validate();
}

void EegSegment::validate() const {
  if (channels < 1 || timesteps < 1) throw std::invalid_argument("segment needs C >= 1 and T >= 1");
  if (!(fs > 0.0f)) throw std::invalid_argument("segment fs must be positive");
  if (data.size() != static_cast<std::size_t>(channels) * timesteps) {
    throw std::invalid_argument("segment data has " + std::to_string(data.size()) + " values, expected C*T = " +
                                std::to_string(static_cast<std::size_t>(channels) * timesteps));
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw std::invalid_argument("segment contains non-finite values");
    if (normalized && std::abs(v) > 1.0f + 1e-6f) throw std::invalid_argument("normalized segment exceeds [-1, 1]");
  }
}

bool operator==(const EegSegment& a, const EegSegment& b) {
  return a.channels == b.channels && a.timesteps == b.timesteps && a.fs == b.fs && a.normalized == b.normalized &&
         a.data == b.data;
}

SegmentStore::SegmentStore(std::uint32_t channels, std::uint32_t timesteps, float fs, bool normalized, bool labeled)
    : channels_(channels), timesteps_(timesteps), fs_(fs), normalized_(normalized), labeled_(labeled) {}

void SegmentStore::add(std::string id, EegSegment seg, std::optional<int> label) {
  if (seg.channels != channels_ || seg.timesteps != timesteps_ || seg.fs != fs_) {
    throw std::invalid_argument("segment " + id + " does not share the store's (C, T, fs)");
  }
  if (seg.normalized != normalized_) throw std::invalid_argument("segment " + id + " normalization differs from store");
  if (label.has_value() != labeled_) {
    throw std::invalid_argument(labeled_ ? "labeled store requires a label for " + id
                                         : "unlabeled store given a label for " + id);
  }
  if (label && *label < 0) throw std::invalid_argument("negative label for " + id);
  if (index_.count(id)) throw std::invalid_argument("duplicate sample id " + id);
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  segments_.push_back(std::move(seg));
  if (label) labels_.push_back(*label);
}

int SegmentStore::label(std::size_t i) const {
  if (!labeled_) throw std::logic_error("store has no labels");
  return labels_.at(i);
}

std::size_t SegmentStore::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("unknown sample id " + id);
  return it->second;
}

bool operator==(const SegmentStore& a, const SegmentStore& b) {
  return a.channels_ == b.channels_ && a.timesteps_ == b.timesteps_ && a.fs_ == b.fs_ &&
         a.normalized_ == b.normalized_ && a.labeled_ == b.labeled_ && a.ids_ == b.ids_ && a.labels_ == b.labels_ &&
         a.segments_ == b.segments_;
}

void TaskSplit::validate(const SegmentStore& store) const {
  if (n_classes < 2) throw std::invalid_argument("task needs n_classes >= 2");
  if (!store.labeled()) throw std::invalid_argument("task store has no labels");
  std::unordered_set<std::string> seen;
  for (const auto* part : {&train, &val, &test}) {
    for (const auto& id : *part) {
      if (!seen.insert(id).second) throw std::invalid_argument("id " + id + " appears in more than one split");
      const int y = store.label(store.index_of(id));
      if (y >= n_classes) throw std::invalid_argument("label of " + id + " >= n_classes");
    }
  }
}

}  // namespace mtdp::data
