#include "mtdp/teachers/rep_cache.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "mtdp/dataio/binio.hpp"

namespace mtdp::teach {

using data::FormatError;

RepCache::RepCache(std::string teacher, std::uint32_t dim, bool masked)
    : teacher_(std::move(teacher)), dim_(dim), masked_(masked) {
  if (dim == 0) throw std::invalid_argument("rep cache dimension must be >= 1");
}

void RepCache::add(const std::string& id, std::span<const float> vec) {
  if (vec.size() != dim_) {
    throw std::invalid_argument("teacher " + teacher_ + " produced " + std::to_string(vec.size()) +
                                " values for " + id + ", declared d_k = " + std::to_string(dim_));
  }
  for (float v : vec)
    if (!std::isfinite(v)) throw std::invalid_argument("teacher " + teacher_ + " produced a non-finite value for " + id);
  if (!index_.emplace(id, ids_.size()).second) throw std::invalid_argument("duplicate id " + id + " in rep cache");
  ids_.push_back(id);
  values_.insert(values_.end(), vec.begin(), vec.end());
}

std::span<const float> RepCache::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("rep cache for " + teacher_ + " has no entry for " + id);
  return row(it->second);
}

std::vector<std::uint8_t> encode_cache(const RepCache& cache) {
  data::ByteWriter w;
  w.magic("MTDP");
  w.u32(kCacheFormatVersion);
  w.str16(cache.teacher());
  w.u32(cache.dim());
  w.u32(static_cast<std::uint32_t>(cache.size()));
  w.u8(cache.masked() ? 1 : 0);
  w.u8(0);  // dtype f32
  for (std::size_t i = 0; i < cache.size(); ++i) {
    w.str16(cache.id(i));
    w.f32s(cache.row(i));
  }
  w.crc_trailer();
  return w.take();
}

RepCache decode_cache(std::span<const std::uint8_t> bytes, const std::string& context) {
  data::ByteReader r(bytes, context);
  r.expect_magic("MTDP");
  r.expect_version(kCacheFormatVersion);
  r.verify_crc_trailer();
  std::string teacher = r.str16();
  const std::uint32_t dim = r.u32(), n = r.u32();
  const std::uint8_t masked = r.u8(), dtype = r.u8();
  if (dtype != 0) throw FormatError(FormatError::Kind::Malformed, context + ": unsupported dtype " + std::to_string(dtype));
  if (masked > 1) throw FormatError(FormatError::Kind::Malformed, context + ": masked flag must be 0 or 1");
  if (dim == 0) throw FormatError(FormatError::Kind::DimensionMismatch, context + ": dimension mismatch (d_k = 0)");
  RepCache cache(std::move(teacher), dim, masked == 1);
  std::vector<float> vec(dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string id = r.str16();
    if (r.remaining() < std::size_t(dim) * 4) {
      // Record payload shorter than the header's d_k even though the checksum held.
      throw FormatError(FormatError::Kind::DimensionMismatch,
                        context + ": dimension mismatch (record " + id + " shorter than d_k = " + std::to_string(dim) +
                            ")",
                        std::size_t(dim) * 4, r.remaining());
    }
    r.f32s(vec);
    try {
      cache.add(id, vec);
    } catch (const std::invalid_argument& e) {
      throw FormatError(FormatError::Kind::Malformed, context + ": " + e.what());
    }
  }
  if (!r.at_end()) {
    throw FormatError(FormatError::Kind::DimensionMismatch,
                      context + ": dimension mismatch (" + std::to_string(r.remaining()) +
                          " bytes left after n records of d_k = " + std::to_string(dim) + ")",
                      0, r.remaining());
  }
  return cache;
}

void cache_write(const RepCache& cache, const std::filesystem::path& path) {
  data::write_file_atomic(path, encode_cache(cache));
}

RepCache cache_read(const std::filesystem::path& path) { return decode_cache(data::read_file(path), path.string()); }

std::uint32_t cache_checksum(const RepCache& cache) {
  const auto bytes = encode_cache(cache);
  std::uint32_t crc;
  std::memcpy(&crc, bytes.data() + bytes.size() - 4, 4);
  return crc;
}

std::string cache_filename(const std::string& teacher, bool masked, std::uint32_t view) {
  return teacher + (masked ? ".masked" + std::to_string(view) : std::string(".clean")) + ".mtdpcache";
}

}  // namespace mtdp::teach
