#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mtdp/eval/finetune.hpp"
#include "json.hpp"

namespace mtdp::eval {

struct TaskSpec {
  std::string name;
  const data::SegmentStore* store = nullptr;
  data::TaskSplit split;

  std::size_t n_classes() const { return static_cast<std::size_t>(split.n_classes); }
  std::vector<std::string> metrics() const;
  /// Throws ConfigError for reserved or empty names, missing labels or a bad split.
  void validate() const;
};

enum class EvalMode { Probe, Finetune };

struct TaskReport {
  std::string name;
  std::map<std::string, double> metrics;
  std::map<std::string, double> chosen;

  friend bool operator==(const TaskReport&, const TaskReport&) = default;
};

struct Report {
  /// Sorted by name; metric values already rounded to 6 decimals.
  std::vector<TaskReport> tasks;
  /// Per metric, mean over the tasks that report it.
  std::map<std::string, double> mean;
  std::uint64_t seed = 0;

  friend bool operator==(const Report&, const Report&) = default;
};

std::map<std::string, double> mean_metrics(const std::vector<TaskReport>& tasks);

/// Runs every task in the given mode. In probe mode the encoder only supplies
/// frozen features; in fine-tune mode each grid run trains its own copy.
Report evaluate(const student::Encoder<float>& enc, const std::vector<TaskSpec>& tasks, EvalMode mode,
                const ProbeConfig& probe = {}, const FinetuneConfig& ft = {}, std::uint64_t seed = 0);

/// Values rounded to 6 decimals.
double round6(double v);

/// {task → {metric → value}, "mean" → {…}, "config" → {task → chosen}, "seed" → n}.
nlohmann::json report_to_json(const Report& r);
Report report_from_json(const nlohmann::json& j);
void write_report(const Report& r, const std::filesystem::path& path);
Report read_report(const std::filesystem::path& path);

}  // namespace mtdp::eval
