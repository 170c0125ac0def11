// mtdp: runs one pipeline stage per invocation.
//
//   mtdp <subcommand> [-c run.ini] [--set section.key=value ...] [--out-dir DIR]
//
// Exit status: 0 ok, 1 usage or config error, 2 missing prerequisite or
// unreadable artifact, 3 numerical failure.
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "mtdp/cli/pipeline.hpp"
#include "mtdp/dataio/binio.hpp"
#include "mtdp/numkernel/error.hpp"

namespace {

constexpr int kUsage = 1, kMissing = 2, kNumerical = 3;

mtdp::cli::ConfigTable load_table(const std::string& path, const std::vector<std::string>& sets,
                                  const std::string& out_dir) {
  auto table = mtdp::cli::default_table();
  if (!path.empty()) mtdp::cli::merge_table(table, mtdp::cli::read_ini(path));
  if (const char* env = std::getenv("MTDP_OUT_DIR"); env && *env) table["run"]["out_dir"] = env;
  for (const auto& s : sets) mtdp::cli::apply_override(table, s);
  if (!out_dir.empty()) table["run"]["out_dir"] = out_dir;
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-teacher distillation pipeline for EEG encoders"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir;
  std::vector<std::string> sets;
  app.add_option("-c,--config", config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--set", sets, "Override, section.key=value (repeatable)");
  app.add_option("--out-dir", out_dir, "Output directory (overrides run.out_dir and MTDP_OUT_DIR)");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth-data", "Generate the synthetic labelled dataset and its split"},
      {"export", "Write adapted inputs and manifests for external teachers"},
      {"extract", "Compute teacher representation caches (clean and masked views)"},
      {"train-gate", "Stage 1: train the gate with masked latent denoising"},
      {"distill", "Stage 2: distill the fused target into the student"},
      {"probe", "Linear probe of the frozen student"},
      {"finetune", "Fine-tune the student over the learning-rate grid"},
      {"report", "Collect evaluation reports into one JSON document"},
      {"validate", "Check the config and list every violation"},
      {"print-config", "Print the resolved config"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    const auto table = load_table(config_path, sets, out_dir);
    if (cmd == "validate") {
      const auto v = mtdp::cli::config_violations(table);
      if (v.empty()) {
        std::cout << "ok\n";
        return 0;
      }
      for (const auto& s : v) std::cerr << s << "\n";
      return kUsage;
    }
    mtdp::cli::Pipeline p(mtdp::cli::resolve_config(table), std::cerr);
    if (cmd == "print-config") std::cout << mtdp::cli::to_ini(p.config().table);
    else if (cmd == "synth-data") p.synth_data();
    else if (cmd == "export") p.export_inputs();
    else if (cmd == "extract") p.extract();
    else if (cmd == "train-gate") p.train_gate();
    else if (cmd == "distill") p.distill();
    else if (cmd == "probe") p.probe();
    else if (cmd == "finetune") p.finetune();
    else if (cmd == "report") std::cout << p.report().dump(2) << "\n";
    return 0;
  } catch (const mtdp::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const mtdp::data::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissing;
  } catch (const mtdp::data::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissing;
  } catch (const mtdp::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}
