#include "mtdp/cli/pipeline.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>

#include "mtdp/dataio/binio.hpp"
#include "mtdp/dataio/segment_file.hpp"
#include "mtdp/dataio/synth.hpp"
#include "mtdp/distill/stage2.hpp"
#include "mtdp/student/checkpoint.hpp"
#include "mtdp/teachers/export.hpp"
#include "mtdp/teachers/mock_teachers.hpp"

namespace mtdp::cli {

namespace fs = std::filesystem;

ArtifactPaths::ArtifactPaths(const RunConfig& cfg)
    : root(cfg.out_dir),
      synth_hash(stage_hash(cfg.table, "synth")),
      extract_hash(stage_hash(cfg.table, "extract")),
      gate_hash(stage_hash(cfg.table, "gate")),
      student_hash(stage_hash(cfg.table, "student")),
      probe_hash(stage_hash(cfg.table, "probe")),
      finetune_hash(stage_hash(cfg.table, "finetune")) {}

fs::path ArtifactPaths::segments() const { return root / ("synth-" + synth_hash + ".eegseg"); }
fs::path ArtifactPaths::split() const { return root / ("synth-" + synth_hash + ".split.json"); }
fs::path ArtifactPaths::extract_dir() const { return root / ("extract-" + extract_hash); }
fs::path ArtifactPaths::gate() const { return root / ("gate-" + gate_hash + ".mtdg"); }
fs::path ArtifactPaths::gate_loss() const { return root / ("gate-" + gate_hash + ".loss.csv"); }
fs::path ArtifactPaths::gate_weights() const { return root / ("gate-" + gate_hash + ".weights.json"); }
fs::path ArtifactPaths::student() const { return root / ("student-" + student_hash + ".mtdw"); }
fs::path ArtifactPaths::student_loss() const { return root / ("student-" + student_hash + ".loss.csv"); }
fs::path ArtifactPaths::student_heldout() const { return root / ("student-" + student_hash + ".heldout.csv"); }
fs::path ArtifactPaths::probe_report() const { return root / ("probe-" + probe_hash + ".json"); }
fs::path ArtifactPaths::finetune_report() const { return root / ("finetune-" + finetune_hash + ".json"); }
fs::path ArtifactPaths::final_report() const {
  return root / ("report-" + probe_hash + "-" + finetune_hash + ".json");
}

namespace {

void require(const fs::path& p, const std::string& what, const std::string& producer) {
  if (!fs::exists(p)) throw data::MissingArtifactError("missing " + what + "; run " + producer + " (" + p.string() + ")");
}

std::unique_ptr<teach::Teacher> make_teacher(const TeacherEntry& t, const data::SynthSpec& d) {
  if (t.kind == "spectral")
    return std::make_unique<teach::SpectralTeacher>(t.name, d.channels, d.timesteps, d.fs, t.bands, t.dim, t.seed);
  if (t.kind == "noise") return std::make_unique<teach::NoiseTeacher>(t.name, t.dim, t.seed, t.scale);
  return nullptr;
}

struct LoadedCaches {
  std::vector<teach::TeacherCaches> caches;
  std::vector<const teach::RepCache*> clean() const {
    std::vector<const teach::RepCache*> out;
    for (const auto& c : caches) out.push_back(&c.clean);
    return out;
  }
};

LoadedCaches load_caches(const RunConfig& cfg, const ArtifactPaths& paths, bool with_masked) {
  LoadedCaches out;
  const auto dir = paths.extract_dir();
  for (const auto& t : cfg.teachers) {
    const std::string producer = t.kind == "external" ? "the external extractor on the exported manifests" : "extract";
    teach::TeacherCaches tc;
    const auto clean = dir / teach::cache_filename(t.name, false);
    require(clean, "teacher cache for " + t.name, producer);
    tc.clean = teach::cache_read(clean);
    if (with_masked) {
      for (std::uint32_t v = 0; v < cfg.resolved_views(); ++v) {
        const auto masked = dir / teach::cache_filename(t.name, true, v);
        require(masked, "masked teacher cache for " + t.name, producer);
        tc.masked.push_back(teach::cache_read(masked));
      }
    }
    if (tc.clean.dim() != t.dim) {
      throw ConfigError("teacher " + t.name + " cache has d_k = " + std::to_string(tc.clean.dim()) + " but the config says " +
                        std::to_string(t.dim));
    }
    out.caches.push_back(std::move(tc));
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  data::write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace

Pipeline::Pipeline(RunConfig cfg, std::ostream& log) : cfg_(std::move(cfg)), paths_(cfg_), log_(log) {}

void Pipeline::archive_config(const fs::path& artifact) const {
  fs::path p = artifact;
  // Strip every extension: "gate-xxxx.mtdg" and "synth-xxxx.split.json" both archive as "<stage>-<hash>.config.ini".
  while (p.has_extension()) p.replace_extension();
  p += ".config.ini";
  write_text(p, to_ini(cfg_.table));
}

void Pipeline::synth_data() {
  fs::create_directories(paths_.root);
  const auto ds = data::synth_dataset(cfg_.data);
  data::write_segments(ds.store, paths_.segments());
  data::write_split(ds.split, paths_.split());
  archive_config(paths_.segments());
  log_ << "synth-data: " << ds.store.size() << " segments -> " << paths_.segments().string() << "\n";
}

void Pipeline::export_inputs() {
  require(paths_.segments(), "segment store", "synth-data");
  const auto store = data::read_segments(paths_.segments());
  const auto dir = paths_.extract_dir();
  fs::create_directories(dir);
  std::size_t n = 0;
  for (const auto& t : cfg_.teachers) {
    if (t.kind != "external") continue;
    n += teach::export_adapted_inputs(store, t.adapter, t.name, cfg_.precompute_options(), dir).size();
  }
  archive_config(dir);
  log_ << "export: " << n << " manifests -> " << dir.string() << "\n";
}

void Pipeline::extract() {
  require(paths_.segments(), "segment store", "synth-data");
  const auto store = data::read_segments(paths_.segments());
  const auto dir = paths_.extract_dir();
  fs::create_directories(dir);
  std::vector<std::unique_ptr<teach::Teacher>> owned;
  std::vector<const teach::Teacher*> builtin;
  for (const auto& t : cfg_.teachers) {
    if (auto teacher = make_teacher(t, cfg_.data)) {
      builtin.push_back(teacher.get());
      owned.push_back(std::move(teacher));
    }
  }
  const auto caches = teach::precompute_reps(store, builtin, cfg_.precompute_options());
  for (std::size_t k = 0; k < caches.size(); ++k) {
    const std::string& name = builtin[k]->name();
    teach::cache_write(caches[k].clean, dir / teach::cache_filename(name, false));
    for (std::uint32_t v = 0; v < caches[k].masked.size(); ++v) {
      teach::cache_write(caches[k].masked[v], dir / teach::cache_filename(name, true, v));
    }
  }
  archive_config(dir);
  // External teachers are produced out of process; fail now rather than at train-gate.
  load_caches(cfg_, paths_, true);
  log_ << "extract: " << builtin.size() << " teachers x " << cfg_.resolved_views() << " masked views -> "
       << dir.string() << "\n";
}

void Pipeline::train_gate() {
  auto loaded = load_caches(cfg_, paths_, true);
  auto res = distill::train_gate(loaded.caches, cfg_.stage1);
  distill::save_gate(*res.gate, paths_.gate());
  distill::write_loss_csv(res.trace, paths_.gate_loss());
  nlohmann::json j;
  j["teachers"] = res.weights.teachers;
  j["mean"] = res.weights.mean;
  j["histogram"] = res.weights.histogram;
  write_text(paths_.gate_weights(), j.dump(2) + "\n");
  archive_config(paths_.gate());
  log_ << "train-gate: " << res.trace.size() << " steps, final loss " << std::setprecision(6)
       << res.trace.back().loss << "\n";
  for (std::size_t k = 0; k < res.weights.teachers.size(); ++k) {
    log_ << "  mean weight " << res.weights.teachers[k] << " = " << res.weights.mean[k] << "\n";
  }
}

void Pipeline::distill() {
  require(paths_.segments(), "segment store", "synth-data");
  require(paths_.gate(), "gate checkpoint", "train-gate");
  const auto store = data::read_segments(paths_.segments());
  const auto split = data::read_split(paths_.split());
  auto loaded = load_caches(cfg_, paths_, false);
  const auto gate = distill::load_gate(paths_.gate());
  auto res = distill::train_student(store, loaded.clean(), *gate, cfg_.student, cfg_.stage2, split.train, split.val);
  student::save_student(*res.student, paths_.student(), res.proj->params.get());
  distill::write_loss_csv(res.trace, paths_.student_loss());
  std::string csv = "step,cosine\n";
  char line[64];
  for (const auto& [step, cos] : res.heldout) {
    std::snprintf(line, sizeof line, "%llu,%.17g\n", static_cast<unsigned long long>(step), cos);
    csv += line;
  }
  write_text(paths_.student_heldout(), csv);
  archive_config(paths_.student());
  log_ << "distill: " << res.trace.size() << " steps, held-out cosine " << std::setprecision(6)
       << (res.heldout.empty() ? 0.0 : res.heldout.back().second) << "\n";
}

namespace {

struct EvalInputs {
  data::SegmentStore store;
  data::TaskSplit split;
  student::LoadedStudent student;
};

EvalInputs eval_inputs(const ArtifactPaths& paths) {
  require(paths.segments(), "segment store", "synth-data");
  require(paths.student(), "student checkpoint", "distill");
  return {data::read_segments(paths.segments()), data::read_split(paths.split()), student::load_student(paths.student())};
}

}  // namespace

eval::Report Pipeline::probe() {
  const auto in = eval_inputs(paths_);
  const auto r = eval::evaluate(*in.student.encoder, {{"synthetic", &in.store, in.split}}, eval::EvalMode::Probe,
                                cfg_.probe, cfg_.finetune, cfg_.seed);
  eval::write_report(r, paths_.probe_report());
  archive_config(paths_.probe_report());
  log_ << "probe: balanced_accuracy " << r.mean.at("balanced_accuracy") << " -> " << paths_.probe_report().string()
       << "\n";
  return r;
}

eval::Report Pipeline::finetune() {
  const auto in = eval_inputs(paths_);
  const auto r = eval::evaluate(*in.student.encoder, {{"synthetic", &in.store, in.split}}, eval::EvalMode::Finetune,
                                cfg_.probe, cfg_.finetune, cfg_.seed);
  eval::write_report(r, paths_.finetune_report());
  archive_config(paths_.finetune_report());
  log_ << "finetune: balanced_accuracy " << r.mean.at("balanced_accuracy") << " -> "
       << paths_.finetune_report().string() << "\n";
  return r;
}

nlohmann::json Pipeline::report() {
  nlohmann::json j = nlohmann::json::object();
  if (fs::exists(paths_.probe_report())) j["probe"] = eval::report_to_json(eval::read_report(paths_.probe_report()));
  if (fs::exists(paths_.finetune_report()))
    j["finetune"] = eval::report_to_json(eval::read_report(paths_.finetune_report()));
  if (j.empty()) throw data::MissingArtifactError("missing evaluation report; run probe or finetune");
  write_text(paths_.final_report(), j.dump(2) + "\n");
  archive_config(paths_.final_report());
  return j;
}

}  // namespace mtdp::cli
