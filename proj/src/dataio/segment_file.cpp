#include "mtdp/dataio/segment_file.hpp"

#include <fstream>

#include "json.hpp"

namespace mtdp::data {

namespace {
constexpr std::uint32_t kFlagNormalized = 1u << 0;
constexpr std::uint32_t kFlagLabels = 1u << 1;
}  // namespace

std::vector<std::uint8_t> encode_segments(const SegmentStore& store) {
  ByteWriter w;
  w.magic("EEGS");
  w.u32(kSegmentFormatVersion);
  w.u32(store.channels());
  w.u32(store.timesteps());
  w.f32(store.fs());
  w.u32((store.normalized() ? kFlagNormalized : 0) | (store.labeled() ? kFlagLabels : 0));
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    w.str16(store.id(i));
    if (store.labeled()) {
      const int y = store.label(i);
      if (y > 0xffff) throw std::out_of_range("label does not fit in u16");
      w.u16(static_cast<std::uint16_t>(y));
    }
    w.f32s(store.segment(i).data);
  }
  return w.take();
}

SegmentStore decode_segments(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic("EEGS");
  r.expect_version(kSegmentFormatVersion);
  const std::uint32_t c = r.u32(), t = r.u32();
  const float fs = r.f32();
  const std::uint32_t flags = r.u32(), n = r.u32();
  if ((flags & ~(kFlagNormalized | kFlagLabels)) != 0) {
    throw FormatError(FormatError::Kind::Malformed, context + ": unknown flag bits");
  }
  if (c == 0 || t == 0) throw FormatError(FormatError::Kind::DimensionMismatch, context + ": zero C or T");
  const bool normalized = flags & kFlagNormalized, labeled = flags & kFlagLabels;
  SegmentStore store(c, t, fs, normalized, labeled);
  const std::size_t ct = static_cast<std::size_t>(c) * t;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string id = r.str16();
    std::optional<int> label;
    if (labeled) label = r.u16();
    std::vector<float> data(ct);
    r.f32s(data);
    try {
      store.add(std::move(id), EegSegment(c, t, fs, std::move(data), normalized), label);
    } catch (const std::invalid_argument& e) {
      throw FormatError(FormatError::Kind::Malformed, context + ": " + e.what());
    }
  }
  if (!r.at_end()) {
    throw FormatError(FormatError::Kind::Malformed,
                      context + ": " + std::to_string(r.remaining()) + " trailing bytes after last sample");
  }
  return store;
}

void write_segments(const SegmentStore& store, const std::filesystem::path& path) {
  write_file_atomic(path, encode_segments(store));
}

SegmentStore read_segments(const std::filesystem::path& path) { return decode_segments(read_file(path), path.string()); }

void write_split(const TaskSplit& split, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["n_classes"] = split.n_classes;
  j["train"] = split.train;
  j["val"] = split.val;
  j["test"] = split.test;
  const std::string text = j.dump(1) + "\n";
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

TaskSplit read_split(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    TaskSplit s;
    s.n_classes = j.at("n_classes").get<int>();
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::Malformed, path.string() + ": " + e.what());
  }
}

}  // namespace mtdp::data
