#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mtdp/cli/config.hpp"
#include "mtdp/eval/report.hpp"

namespace mtdp::cli {

/// Artifact locations for one resolved config. Every name is
/// "<stage>-<hash>" so reruns with the same inputs land on the same files.
struct ArtifactPaths {
  std::filesystem::path root;
  std::string synth_hash, extract_hash, gate_hash, student_hash, probe_hash, finetune_hash;

  explicit ArtifactPaths(const RunConfig& cfg);

  std::filesystem::path segments() const;
  std::filesystem::path split() const;
  /// Holds every teacher cache and, for external teachers, the exported inputs.
  std::filesystem::path extract_dir() const;
  std::filesystem::path gate() const;
  std::filesystem::path gate_loss() const;
  std::filesystem::path gate_weights() const;
  std::filesystem::path student() const;
  std::filesystem::path student_loss() const;
  std::filesystem::path student_heldout() const;
  std::filesystem::path probe_report() const;
  std::filesystem::path finetune_report() const;
  std::filesystem::path final_report() const;
};

/// Runs one subcommand. Stages read their prerequisites from disk and throw
/// data::MissingArtifactError naming the subcommand that produces them.
class Pipeline {
 public:
  Pipeline(RunConfig cfg, std::ostream& log);

  const RunConfig& config() const { return cfg_; }
  const ArtifactPaths& paths() const { return paths_; }

  void synth_data();
  /// Writes adapted inputs and manifests for external teachers.
  void export_inputs();
  /// Embeds with the built-in teachers; external caches must already exist.
  void extract();
  void train_gate();
  void distill();
  eval::Report probe();
  eval::Report finetune();
  /// Combines the probe and fine-tune reports that exist; needs at least one.
  nlohmann::json report();

 private:
  void archive_config(const std::filesystem::path& artifact) const;

  RunConfig cfg_;
  ArtifactPaths paths_;
  std::ostream& log_;
};

}  // namespace mtdp::cli
