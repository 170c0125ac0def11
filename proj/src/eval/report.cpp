#include "mtdp/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mtdp/dataio/binio.hpp"
#include "mtdp/eval/metrics.hpp"

namespace mtdp::eval {

namespace {

const std::set<std::string> kReserved = {"mean", "config", "seed"};

std::map<std::string, double> rounded(const std::map<std::string, double>& m) {
  std::map<std::string, double> out;
  for (const auto& [k, v] : m) out[k] = round6(v);
  return out;
}

}  // namespace

std::vector<std::string> TaskSpec::metrics() const { return metric_names(n_classes()); }

void TaskSpec::validate() const {
  if (name.empty() || kReserved.count(name)) throw ConfigError("task name '" + name + "' is empty or reserved");
  if (!store) throw ConfigError("task '" + name + "' has no segment store");
  if (!store->labeled()) throw ConfigError("task '" + name + "' needs a labeled segment store");
  if (split.n_classes < 2) throw ConfigError("task '" + name + "' needs at least 2 classes");
  try {
    split.validate(*store);
  } catch (const std::exception& e) {
    throw ConfigError("task '" + name + "': " + e.what());
  }
}

std::map<std::string, double> mean_metrics(const std::vector<TaskReport>& tasks) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& t : tasks)
    for (const auto& [k, v] : t.metrics) {
      acc[k].first += v;
      acc[k].second += 1;
    }
  std::map<std::string, double> out;
  for (const auto& [k, s] : acc) out[k] = s.first / static_cast<double>(s.second);
  return out;
}

Report evaluate(const student::Encoder<float>& enc, const std::vector<TaskSpec>& tasks, EvalMode mode,
                const ProbeConfig& probe, const FinetuneConfig& ft, std::uint64_t seed) {
  std::set<std::string> names;
  for (const auto& t : tasks) {
    t.validate();
    if (!names.insert(t.name).second) throw ConfigError("duplicate task name '" + t.name + "'");
  }
  Report r;
  r.seed = seed;
  for (const auto& t : tasks) {
    const SplitRows rows = resolve_split(*t.store, t.split);
    AdaptationResult res;
    if (mode == EvalMode::Probe) {
      const Features f = extract_features(enc, *t.store);
      res = linear_probe(f, t.store->labels(), rows, t.n_classes(), probe);
    } else {
      FinetuneConfig cfg = ft;
      cfg.seed = seed;
      res = finetune(enc, *t.store, rows, t.n_classes(), cfg).result;
    }
    r.tasks.push_back({t.name, rounded(res.test_metrics), res.chosen});
  }
  // Same order the JSON object uses, so a parsed report compares equal.
  std::sort(r.tasks.begin(), r.tasks.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  r.mean = rounded(mean_metrics(r.tasks));
  return r;
}

double round6(double v) {
  const double r = std::round(v * 1e6) / 1e6;
  return r == 0.0 ? 0.0 : r;  // no "-0.0"
}

nlohmann::json report_to_json(const Report& r) {
  nlohmann::json j = nlohmann::json::object();
  nlohmann::json config = nlohmann::json::object();
  for (const auto& t : r.tasks) {
    if (kReserved.count(t.name)) throw ConfigError("task name '" + t.name + "' is reserved in the report");
    j[t.name] = rounded(t.metrics);
    config[t.name] = t.chosen;
  }
  j["mean"] = rounded(r.mean);
  j["config"] = config;
  j["seed"] = r.seed;
  return j;
}

Report report_from_json(const nlohmann::json& j) {
  try {
    Report r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.mean = j.at("mean").get<std::map<std::string, double>>();
    const auto& config = j.at("config");
    for (const auto& [name, metrics] : j.items()) {
      if (kReserved.count(name)) continue;
      TaskReport t{name, metrics.get<std::map<std::string, double>>(), {}};
      if (config.contains(name)) t.chosen = config.at(name).get<std::map<std::string, double>>();
      r.tasks.push_back(std::move(t));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw data::FormatError(data::FormatError::Kind::Malformed, std::string("report: ") + e.what());
  }
}

void write_report(const Report& r, const std::filesystem::path& path) {
  const std::string text = report_to_json(r).dump(2) + "\n";
  data::write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Report read_report(const std::filesystem::path& path) {
  const auto bytes = data::read_file(path);
  try {
    return report_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::parse_error& e) {
    throw data::FormatError(data::FormatError::Kind::Malformed, path.string() + ": " + e.what());
  }
}

}  // namespace mtdp::eval
