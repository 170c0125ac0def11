#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mtdp/dataio/binio.hpp"
#include "mtdp/dataio/segment.hpp"

namespace mtdp::data {

inline constexpr std::uint32_t kSegmentFormatVersion = 1;

std::vector<std::uint8_t> encode_segments(const SegmentStore& store);
SegmentStore decode_segments(std::span<const std::uint8_t> bytes, const std::string& context = "segment file");

void write_segments(const SegmentStore& store, const std::filesystem::path& path);
SegmentStore read_segments(const std::filesystem::path& path);

/// Splits are stored as JSON: {"n_classes": k, "train": [...], "val": [...], "test": [...]}.
void write_split(const TaskSplit& split, const std::filesystem::path& path);
TaskSplit read_split(const std::filesystem::path& path);

}  // namespace mtdp::data
