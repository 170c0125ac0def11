#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mtdp::data {

/// One C×T window, channel-major. Values are µV until normalized.
struct EegSegment {
  std::uint32_t channels = 0;
  std::uint32_t timesteps = 0;
  float fs = 0.0f;
  std::vector<float> data;
  bool normalized = false;

  EegSegment() = default;
  EegSegment(std::uint32_t c, std::uint32_t t, float fs_, std::vector<float> values, bool normalized_ = false);

  float at(std::size_t c, std::size_t t) const { return data[c * timesteps + t]; }
  float& at(std::size_t c, std::size_t t) { return data[c * timesteps + t]; }

  /// Throws std::invalid_argument naming the violated invariant.
  void validate() const;
};

bool operator==(const EegSegment& a, const EegSegment& b);

/// Ordered segments sharing (C, T, fs) with unique ids and optional labels.
class SegmentStore {
 public:
  SegmentStore() = default;
  SegmentStore(std::uint32_t channels, std::uint32_t timesteps, float fs, bool normalized, bool labeled);

  void add(std::string id, EegSegment seg, std::optional<int> label = std::nullopt);

  std::size_t size() const { return segments_.size(); }
  std::uint32_t channels() const { return channels_; }
  std::uint32_t timesteps() const { return timesteps_; }
  float fs() const { return fs_; }
  bool normalized() const { return normalized_; }
  bool labeled() const { return labeled_; }

  const EegSegment& segment(std::size_t i) const { return segments_.at(i); }
  const std::string& id(std::size_t i) const { return ids_.at(i); }
  int label(std::size_t i) const;
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<int>& labels() const { return labels_; }
  /// Index of `id`, or throws std::out_of_range.
  std::size_t index_of(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  friend bool operator==(const SegmentStore& a, const SegmentStore& b);

 private:
  std::uint32_t channels_ = 0, timesteps_ = 0;
  float fs_ = 0.0f;
  bool normalized_ = false, labeled_ = false;
  std::vector<EegSegment> segments_;
  std::vector<std::string> ids_;
  std::vector<int> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TaskSplit {
  std::vector<std::string> train, val, test;
  int n_classes = 0;

  /// Disjointness, membership in `store`, and every label < n_classes.
  void validate(const SegmentStore& store) const;
};

}  // namespace mtdp::data
