#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mtdp/dataio/segment.hpp"
#include "mtdp/teachers/precompute.hpp"

namespace mtdp::teach {

enum class AdapterKind { Image, Univariate };

std::string to_string(AdapterKind kind);
AdapterKind parse_adapter_kind(const std::string& s);

struct ExportSample {
  std::string id;
  std::uint64_t offset = 0;  // bytes into the data file
  std::vector<std::uint32_t> shape;

  friend bool operator==(const ExportSample&, const ExportSample&) = default;
};

/// Everything an external extractor needs to turn one exported view into a
/// cache: where the adapted tensors are, how they were produced, and the exact
/// cache file it must write.
struct ExportManifest {
  std::uint32_t format_version = 1;
  std::string teacher;
  AdapterKind adapter = AdapterKind::Image;
  std::uint32_t channels = 0, timesteps = 0;
  float fs = 0;
  bool masked = false;
  std::uint32_t view = 0;
  std::uint64_t mask_seed = 0;
  std::string data_file;     // raw little-endian f32, relative to the manifest
  std::string output_cache;  // file name the extractor must produce
  std::vector<ExportSample> samples;

  friend bool operator==(const ExportManifest&, const ExportManifest&) = default;
};

void write_manifest(const ExportManifest& m, const std::filesystem::path& path);
ExportManifest read_manifest(const std::filesystem::path& path);

/// Writes the clean view and every masked view of `store` adapted for
/// `teacher` into `dir`; masks match precompute_reps under the same options.
/// Returns the manifests in order clean, masked0, masked1, ...
std::vector<ExportManifest> export_adapted_inputs(const data::SegmentStore& store, AdapterKind kind,
                                                  const std::string& teacher, const PrecomputeOptions& opts,
                                                  const std::filesystem::path& dir);

/// "<teacher>.<clean|maskedN>.manifest.json"
std::string manifest_filename(const std::string& teacher, bool masked, std::uint32_t view = 0);

}  // namespace mtdp::teach
