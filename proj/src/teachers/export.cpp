#include "mtdp/teachers/export.hpp"

#include <stdexcept>

#include "json.hpp"
#include "mtdp/dataio/binio.hpp"
#include "mtdp/teachers/adapters.hpp"

namespace mtdp::teach {

using nlohmann::ordered_json;

std::string to_string(AdapterKind kind) { return kind == AdapterKind::Image ? "image" : "univariate"; }

AdapterKind parse_adapter_kind(const std::string& s) {
  if (s == "image") return AdapterKind::Image;
  if (s == "univariate") return AdapterKind::Univariate;
  throw std::invalid_argument("unknown adapter kind '" + s + "' (expected image or univariate)");
}

namespace {

std::string view_tag(bool masked, std::uint32_t view) {
  return masked ? "masked" + std::to_string(view) : std::string("clean");
}

ordered_json adapter_params(const ExportManifest& m) {
  if (m.adapter == AdapterKind::Image) {
    return {{"planes", 3}, {"scaling", "min-max over all C*T values"}, {"range", {0.0, 1.0}}, {"constant_fill", 0.5}};
  }
  return {{"series_per_sample", m.channels}, {"channel_pooling", "mean"}, {"scaling", "none"}};
}

}  // namespace

std::string manifest_filename(const std::string& teacher, bool masked, std::uint32_t view) {
  return teacher + "." + view_tag(masked, view) + ".manifest.json";
}

void write_manifest(const ExportManifest& m, const std::filesystem::path& path) {
  ordered_json j;
  j["format_version"] = m.format_version;
  j["teacher"] = m.teacher;
  j["adapter"] = to_string(m.adapter);
  j["adapter_params"] = adapter_params(m);
  j["channels"] = m.channels;
  j["timesteps"] = m.timesteps;
  j["fs"] = m.fs;
  j["masked"] = m.masked;
  j["view"] = m.view;
  j["mask_seed"] = m.mask_seed;
  j["data_file"] = m.data_file;
  j["dtype"] = "f32";
  j["byte_order"] = "little";
  j["output_cache"] = m.output_cache;
  j["samples"] = ordered_json::array();
  for (const auto& s : m.samples) j["samples"].push_back({{"id", s.id}, {"offset", s.offset}, {"shape", s.shape}});
  const std::string text = j.dump(1) + "\n";
  data::write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ExportManifest read_manifest(const std::filesystem::path& path) {
  const auto bytes = data::read_file(path);
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    ExportManifest m;
    m.format_version = j.at("format_version").get<std::uint32_t>();
    if (m.format_version != 1) {
      throw data::FormatError(data::FormatError::Kind::VersionMismatch, path.string() + ": version mismatch", 1,
                              m.format_version);
    }
    m.teacher = j.at("teacher").get<std::string>();
    m.adapter = parse_adapter_kind(j.at("adapter").get<std::string>());
    m.channels = j.at("channels").get<std::uint32_t>();
    m.timesteps = j.at("timesteps").get<std::uint32_t>();
    m.fs = j.at("fs").get<float>();
    m.masked = j.at("masked").get<bool>();
    m.view = j.at("view").get<std::uint32_t>();
    m.mask_seed = j.at("mask_seed").get<std::uint64_t>();
    m.data_file = j.at("data_file").get<std::string>();
    m.output_cache = j.at("output_cache").get<std::string>();
    for (const auto& s : j.at("samples")) {
      m.samples.push_back({s.at("id").get<std::string>(), s.at("offset").get<std::uint64_t>(),
                           s.at("shape").get<std::vector<std::uint32_t>>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw data::FormatError(data::FormatError::Kind::Malformed, path.string() + ": " + e.what());
  }
}

std::vector<ExportManifest> export_adapted_inputs(const data::SegmentStore& store, AdapterKind kind,
                                                  const std::string& teacher, const PrecomputeOptions& opts,
                                                  const std::filesystem::path& dir) {
  if (store.size() == 0) throw std::invalid_argument("export: empty segment store");
  std::vector<ExportManifest> manifests;
  for (std::uint32_t v = 0; v <= opts.views; ++v) {
    const bool masked = v > 0;
    const std::uint32_t view = masked ? v - 1 : 0;
    ExportManifest m;
    m.teacher = teacher;
    m.adapter = kind;
    m.channels = store.channels();
    m.timesteps = store.timesteps();
    m.fs = store.fs();
    m.masked = masked;
    m.view = view;
    m.mask_seed = opts.mask_seed;
    m.data_file = teacher + "." + view_tag(masked, view) + ".inputs.f32";
    m.output_cache = cache_filename(teacher, masked, view);

    data::ByteWriter w;
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto& id = store.id(i);
      const auto x = masked ? mask::apply_mask(store.segment(i), view_mask(store, id, view, opts).second)
                            : store.segment(i);
      ExportSample s{id, w.bytes().size(), {}};
      if (kind == AdapterKind::Image) {
        s.shape = {3, store.channels(), store.timesteps()};
        w.f32s(image_view_adapt(x));
      } else {
        s.shape = {store.channels(), store.timesteps()};
        for (const auto& series : univariate_views(x)) w.f32s(series);
      }
      m.samples.push_back(std::move(s));
    }
    data::write_file_atomic(dir / m.data_file, w.bytes());
    write_manifest(m, dir / manifest_filename(teacher, masked, view));
    manifests.push_back(std::move(m));
  }
  return manifests;
}

}  // namespace mtdp::teach
