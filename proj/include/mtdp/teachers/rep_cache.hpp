#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mtdp::teach {

inline constexpr std::uint32_t kCacheFormatVersion = 1;

/// Precomputed vectors of one teacher for one view (clean or masked), in
/// sample order.
class RepCache {
 public:
  RepCache() = default;
  RepCache(std::string teacher, std::uint32_t dim, bool masked);

  /// Throws std::invalid_argument on a duplicate id or wrong length.
  void add(const std::string& id, std::span<const float> vec);

  const std::string& teacher() const { return teacher_; }
  std::uint32_t dim() const { return dim_; }
  bool masked() const { return masked_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(std::size_t i) const { return ids_.at(i); }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values_).subspan(i * dim_, dim_);
  }
  /// Throws std::out_of_range for an unknown id.
  std::span<const float> find(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const std::vector<float>& values() const { return values_; }

  friend bool operator==(const RepCache& a, const RepCache& b) {
    return a.teacher_ == b.teacher_ && a.dim_ == b.dim_ && a.masked_ == b.masked_ && a.ids_ == b.ids_ &&
           a.values_ == b.values_;
  }

 private:
  std::string teacher_;
  std::uint32_t dim_ = 0;
  bool masked_ = false;
  std::vector<std::string> ids_;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::vector<std::uint8_t> encode_cache(const RepCache& cache);
RepCache decode_cache(std::span<const std::uint8_t> bytes, const std::string& context = "rep cache");
void cache_write(const RepCache& cache, const std::filesystem::path& path);
RepCache cache_read(const std::filesystem::path& path);

/// The trailing CRC32 of the encoded cache.
std::uint32_t cache_checksum(const RepCache& cache);

/// "<teacher>.clean.mtdpcache" or "<teacher>.masked<view>.mtdpcache".
std::string cache_filename(const std::string& teacher, bool masked, std::uint32_t view = 0);

}  // namespace mtdp::teach
