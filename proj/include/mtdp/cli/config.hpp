#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mtdp/dataio/synth.hpp"
#include "mtdp/distill/stage2.hpp"
#include "mtdp/eval/finetune.hpp"
#include "mtdp/masking/mask.hpp"
#include "mtdp/teachers/export.hpp"
#include "mtdp/teachers/mock_teachers.hpp"

namespace mtdp::cli {

/// section → key → raw value, after defaults, the config file and overrides.
using ConfigTable = std::map<std::string, std::map<std::string, std::string>>;

struct TeacherEntry {
  std::string name;
  /// spectral | noise | external (caches written by the extractor)
  std::string kind;
  std::uint32_t dim = 32;
  std::uint64_t seed = 0;
  double scale = 1.0;
  std::vector<teach::Band> bands;
  teach::AdapterKind adapter = teach::AdapterKind::Image;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  data::SynthSpec data;
  mask::MaskingConfig masking;
  /// Masked views per teacher; 0 means one per Stage 1 epoch.
  std::uint32_t mask_views = 0;
  bool identity_mask = false;
  std::vector<TeacherEntry> teachers;
  std::uint32_t gate_hidden = 0;
  bool gate_zero_init = false;
  distill::Stage1Config stage1;
  student::StudentConfig student;
  distill::Stage2Config stage2;
  eval::ProbeConfig probe;
  eval::FinetuneConfig finetune;
  ConfigTable table;

  std::uint32_t resolved_views() const;
  distill::GateConfig gate_config() const;
  teach::PrecomputeOptions precompute_options() const;
};

/// Every recognised section and key with its default. Sections named
/// "teacher.<name>" are created for each entry of teachers.names.
ConfigTable default_table();

/// Parses an INI file; throws ConfigError on syntax errors.
ConfigTable read_ini(const std::filesystem::path& path);

/// Layers `over` onto `base`, adding teacher sections as needed.
void merge_table(ConfigTable& base, const ConfigTable& over);

/// "section.key=value"; the section is everything before the last dot.
void apply_override(ConfigTable& table, const std::string& assignment);

/// Unknown sections or keys, unparsable values and semantic problems
/// (T not divisible by P, teacher dimension mismatch, empty grid, ...).
std::vector<std::string> config_violations(const ConfigTable& table);

/// Throws ConfigError listing every violation.
RunConfig resolve_config(const ConfigTable& table);

/// Canonical INI text: sections and keys sorted.
std::string to_ini(const ConfigTable& table);

/// Pipeline stages in order. Each stage's hash covers its own sections and
/// everything upstream, so artifact names change exactly when their inputs do.
const std::vector<std::string>& stage_names();
std::string stage_hash(const ConfigTable& table, std::string_view stage);

}  // namespace mtdp::cli
