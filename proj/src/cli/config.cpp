#include "mtdp/cli/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>

#include "mtdp/dataio/binio.hpp"
#include "mtdp/numkernel/error.hpp"
#include "mtdp/numkernel/rng.hpp"

namespace mtdp::cli {

namespace {

const std::map<std::string, std::string> kTeacherDefaults = {
    {"kind", "spectral"}, {"dim", "32"}, {"seed", "0"}, {"scale", "1"},
    {"bands", "1-4,4-8,8-13,13-30"}, {"adapter", "image"}};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    const auto b = cur.find_first_not_of(" \t"), e = cur.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

// Collects parse failures instead of throwing so every problem is reported.
class Reader {
 public:
  Reader(const ConfigTable& t, std::vector<std::string>& errors) : t_(t), errors_(errors) {}

  const std::string& raw(const std::string& sec, const std::string& key) const { return t_.at(sec).at(key); }

  template <typename T>
  T num(const std::string& sec, const std::string& key) {
    const std::string& s = raw(sec, key);
    T v{};
    if constexpr (std::is_floating_point_v<T>) {
      try {
        std::size_t used = 0;
        const double d = std::stod(s, &used);
        if (used == s.size()) return static_cast<T>(d);
      } catch (const std::exception&) {
      }
    } else {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec == std::errc() && p == s.data() + s.size()) return v;
    }
    errors_.push_back(sec + "." + key + ": cannot parse '" + s + "' as a number");
    return T{};
  }

  bool flag(const std::string& sec, const std::string& key) {
    const std::string& s = raw(sec, key);
    if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "off" || s == "no") return false;
    errors_.push_back(sec + "." + key + ": expected a boolean, got '" + s + "'");
    return false;
  }

  std::vector<double> nums(const std::string& sec, const std::string& key) {
    std::vector<double> out;
    for (const auto& item : split_list(raw(sec, key))) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        errors_.push_back(sec + "." + key + ": cannot parse list item '" + item + "'");
      }
    }
    return out;
  }

  void error(std::string msg) { errors_.push_back(std::move(msg)); }

 private:
  const ConfigTable& t_;
  std::vector<std::string>& errors_;
};

void check_known(const ConfigTable& table, std::vector<std::string>& errors) {
  const ConfigTable defaults = default_table();
  std::set<std::string> listed;
  if (table.count("teachers") && table.at("teachers").count("names")) {
    for (const auto& n : split_list(table.at("teachers").at("names"))) listed.insert(n);
  }
  for (const auto& [sec, keys] : table) {
    const std::map<std::string, std::string>* schema = nullptr;
    if (sec.rfind("teacher.", 0) == 0) {
      if (!listed.count(sec.substr(8))) {
        errors.push_back("section [" + sec + "] names a teacher missing from teachers.names");
        continue;
      }
      schema = &kTeacherDefaults;
    } else if (defaults.count(sec)) {
      schema = &defaults.at(sec);
    } else {
      errors.push_back("unknown section [" + sec + "]");
      continue;
    }
    for (const auto& [key, value] : keys) {
      if (!schema->count(key)) errors.push_back("unknown key " + sec + "." + key);
    }
  }
}

RunConfig build(const ConfigTable& table, std::vector<std::string>& errors) {
  check_known(table, errors);
  RunConfig c;
  c.table = table;
  // Fill anything missing (e.g. keys of a teacher section the file omitted).
  ConfigTable full = default_table();
  merge_table(full, table);
  Reader r(full, errors);

  c.seed = r.num<std::uint64_t>("run", "seed");
  c.out_dir = r.raw("run", "out_dir");

  auto& d = c.data;
  d.channels = r.num<std::uint32_t>("data", "channels");
  d.timesteps = r.num<std::uint32_t>("data", "timesteps");
  d.fs = r.num<float>("data", "fs");
  d.n_samples = r.num<std::uint32_t>("data", "n_samples");
  d.n_classes = r.num<int>("data", "n_classes");
  d.snr = r.num<double>("data", "snr");
  d.signal_uV = r.num<double>("data", "signal_uv");
  d.distractor_uV = r.num<double>("data", "distractor_uv");
  d.f_lo = r.num<double>("data", "f_lo");
  d.f_hi = r.num<double>("data", "f_hi");
  d.bandwidth_hz = r.num<double>("data", "bandwidth_hz");
  d.labeled = true;
  d.seed = nk::Stream(c.seed).split("synth").next_u64();
  try {
    d.validate();
  } catch (const std::exception& e) {
    errors.push_back(std::string("data: ") + e.what());
  }

  c.masking.segment_prob = r.num<double>("mask", "segment_prob");
  c.masking.min_seconds = r.num<double>("mask", "min_seconds");
  c.masking.max_seconds = r.num<double>("mask", "max_seconds");
  c.mask_views = r.num<std::uint32_t>("mask", "views");
  c.identity_mask = r.flag("mask", "identity");
  try {
    c.masking.validate();
    if (!c.identity_mask && c.masking.max_seconds * d.fs > d.timesteps) {
      errors.push_back("mask.max_seconds spans more than data.timesteps");
    }
  } catch (const std::exception& e) {
    errors.push_back(std::string("mask: ") + e.what());
  }

  const auto names = split_list(r.raw("teachers", "names"));
  if (names.empty()) errors.push_back("teachers.names lists no teachers");
  std::set<std::string> seen;
  for (const auto& name : names) {
    if (!seen.insert(name).second) errors.push_back("teacher '" + name + "' listed twice");
    const std::string sec = "teacher." + name;
    TeacherEntry t;
    t.name = name;
    t.kind = r.raw(sec, "kind");
    t.dim = r.num<std::uint32_t>(sec, "dim");
    t.seed = r.num<std::uint64_t>(sec, "seed");
    if (t.seed == 0) t.seed = nk::Stream(c.seed).split("teacher").split(name).next_u64();
    t.scale = r.num<double>(sec, "scale");
    for (const auto& band : split_list(r.raw(sec, "bands"))) {
      const auto dash = band.find('-');
      try {
        if (dash == std::string::npos) throw std::invalid_argument(band);
        t.bands.push_back({std::stod(band.substr(0, dash)), std::stod(band.substr(dash + 1))});
      } catch (const std::exception&) {
        errors.push_back(sec + ".bands: expected lo-hi pairs, got '" + band + "'");
      }
    }
    try {
      t.adapter = teach::parse_adapter_kind(r.raw(sec, "adapter"));
    } catch (const std::exception& e) {
      errors.push_back(sec + ".adapter: " + e.what());
    }
    if (t.kind != "spectral" && t.kind != "noise" && t.kind != "external") {
      errors.push_back(sec + ".kind must be spectral, noise or external, got '" + t.kind + "'");
    }
    if (t.kind == "noise" && !(t.scale > 0)) errors.push_back(sec + ".scale must be > 0");
    for (const auto& b : t.bands) {
      if (t.kind == "spectral" && !(b.lo_hz >= 0 && b.hi_hz > b.lo_hz && b.hi_hz <= d.fs / 2)) {
        errors.push_back(sec + ".bands: band outside (0, fs/2)");
      }
    }
    c.teachers.push_back(std::move(t));
  }

  c.gate_hidden = r.num<std::uint32_t>("gate", "hidden");
  c.gate_zero_init = r.flag("gate", "zero_init_output");
  for (const auto& v : c.gate_config().violations()) errors.push_back(v);

  auto optim = [&](const std::string& sec, nk::OptimizerConfig& o) {
    o.lr_max = r.num<double>(sec, "lr");
    o.lr_min = sec == "stage1" ? o.lr_max : r.num<double>(sec, "lr_min");
    o.weight_decay = r.num<double>(sec, "weight_decay");
    o.clip_norm = r.num<double>(sec, "clip_norm");
    try {
      o.validate();
    } catch (const std::exception& e) {
      errors.push_back(sec + ": " + e.what());
    }
  };
  c.stage1.epochs = r.num<std::uint32_t>("stage1", "epochs");
  c.stage1.batch_size = r.num<std::uint32_t>("stage1", "batch_size");
  c.stage1.seed = nk::Stream(c.seed).split("stage1").next_u64();
  c.stage1.hidden = c.gate_hidden;
  c.stage1.zero_init_output = c.gate_zero_init;
  optim("stage1", c.stage1.optim);
  if (c.stage1.batch_size == 0) errors.push_back("stage1.batch_size must be >= 1");

  auto& s = c.student;
  s.channels = d.channels;
  s.timesteps = d.timesteps;
  s.patch_len = r.num<std::uint32_t>("student", "patch_len");
  s.d_model = r.num<std::uint32_t>("student", "d_model");
  s.n_layers = r.num<std::uint32_t>("student", "n_layers");
  s.spatial_heads = r.num<std::uint32_t>("student", "spatial_heads");
  s.temporal_heads = r.num<std::uint32_t>("student", "temporal_heads");
  s.ffn_dim = r.num<std::uint32_t>("student", "ffn_dim");
  s.dropout = r.num<float>("student", "dropout");
  for (const auto& v : s.violations()) errors.push_back(v);

  c.stage2.epochs = r.num<std::uint32_t>("stage2", "epochs");
  c.stage2.batch_size = r.num<std::uint32_t>("stage2", "batch_size");
  c.stage2.max_steps = r.num<std::uint64_t>("stage2", "max_steps");
  c.stage2.eval_every = r.num<std::uint64_t>("stage2", "eval_every");
  c.stage2.seed = nk::Stream(c.seed).split("stage2").next_u64();
  optim("stage2", c.stage2.optim);
  if (c.stage2.batch_size == 0 || c.stage2.epochs == 0) errors.push_back("stage2 needs epochs and batch_size >= 1");

  c.probe.l2 = r.num<double>("probe", "l2");
  c.probe.l2_grid = r.nums("probe", "l2_grid");
  c.probe.max_iter = r.num<std::size_t>("probe", "max_iter");
  c.probe.grad_tol = r.num<double>("probe", "grad_tol");
  for (double v : c.probe.l2_grid)
    if (!(v >= 0)) errors.push_back("probe.l2_grid values must be >= 0");

  auto& f = c.finetune;
  f.backbone_lrs = r.nums("finetune", "backbone_lrs");
  f.multi_lr.clear();
  for (const auto& m : split_list(r.raw("finetune", "multi_lr"))) {
    if (m == "on" || m == "true") f.multi_lr.push_back(true);
    else if (m == "off" || m == "false") f.multi_lr.push_back(false);
    else errors.push_back("finetune.multi_lr items must be on/off, got '" + m + "'");
  }
  f.head_lr_factor = r.num<double>("finetune", "head_lr_factor");
  f.epochs = r.num<std::uint32_t>("finetune", "epochs");
  f.batch_size = r.num<std::uint32_t>("finetune", "batch_size");
  f.dropout = r.num<double>("finetune", "dropout");
  f.label_smoothing = r.num<double>("finetune", "label_smoothing");
  f.lr_min = r.num<double>("finetune", "lr_min");
  f.seed = nk::Stream(c.seed).split("finetune").next_u64();
  if (f.backbone_lrs.empty() || f.multi_lr.empty()) errors.push_back("finetune grid is empty");
  for (double lr : f.backbone_lrs)
    if (!(lr > 0)) errors.push_back("finetune.backbone_lrs values must be > 0");
  if (f.epochs == 0 || f.batch_size == 0) errors.push_back("finetune needs epochs and batch_size >= 1");
  return c;
}

}  // namespace

std::uint32_t RunConfig::resolved_views() const {
  return mask_views ? mask_views : stage1.resolved_epochs(data.n_samples);
}

distill::GateConfig RunConfig::gate_config() const {
  distill::GateConfig g;
  for (const auto& t : teachers) {
    g.teachers.push_back(t.name);
    g.dims.push_back(t.dim);
  }
  g.hidden = gate_hidden;
  return g;
}

teach::PrecomputeOptions RunConfig::precompute_options() const {
  teach::PrecomputeOptions o;
  o.masking = masking;
  o.mask_seed = nk::Stream(seed).split("mask").next_u64();
  o.views = resolved_views();
  o.identity_mask = identity_mask;
  return o;
}

ConfigTable default_table() {
  ConfigTable t;
  t["run"] = {{"seed", "0"}, {"out_dir", "mtdp_out"}};
  t["data"] = {{"channels", "4"},     {"timesteps", "400"},   {"fs", "100"},          {"n_samples", "2000"},
               {"n_classes", "2"},    {"snr", "1"},           {"signal_uv", "10"},    {"distractor_uv", "0"},
               {"f_lo", "6"},         {"f_hi", "24"},         {"bandwidth_hz", "2"}};
  t["mask"] = {{"segment_prob", "0.5"}, {"min_seconds", "1"}, {"max_seconds", "2"}, {"views", "0"},
               {"identity", "false"}};
  t["teachers"] = {{"names", "spectral,noise"}};
  t["teacher.spectral"] = kTeacherDefaults;
  t["teacher.noise"] = kTeacherDefaults;
  t["teacher.noise"]["kind"] = "noise";
  t["gate"] = {{"hidden", "0"}, {"zero_init_output", "false"}};
  t["stage1"] = {{"epochs", "0"}, {"batch_size", "32"}, {"lr", "5e-4"}, {"weight_decay", "5e-2"}, {"clip_norm", "1"}};
  t["student"] = {{"patch_len", "40"},     {"d_model", "64"}, {"n_layers", "4"},  {"spatial_heads", "2"},
                  {"temporal_heads", "2"}, {"ffn_dim", "256"}, {"dropout", "0"}};
  t["stage2"] = {{"epochs", "40"},      {"batch_size", "32"},   {"max_steps", "500"}, {"eval_every", "100"},
                 {"lr", "5e-4"},        {"lr_min", "1e-5"},     {"weight_decay", "5e-2"}, {"clip_norm", "1"}};
  t["probe"] = {{"l2", "1e-4"}, {"l2_grid", "1e-6,1e-5,1e-4,1e-3,1e-2,1e-1,1"}, {"max_iter", "20000"},
                {"grad_tol", "1e-6"}};
  t["finetune"] = {{"backbone_lrs", "5e-5,1e-4,5e-4"}, {"multi_lr", "on,off"}, {"head_lr_factor", "5"},
                   {"epochs", "50"},  {"batch_size", "64"}, {"dropout", "0.1"}, {"label_smoothing", "0.1"},
                   {"lr_min", "1e-6"}};
  return t;
}

ConfigTable read_ini(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  ConfigTable t;
  for (const auto& [sec, node] : pt) {
    if (node.empty()) throw ConfigError("config " + path.string() + ": key '" + sec + "' outside any section");
    for (const auto& [key, value] : node) t[sec][key] = value.data();
  }
  return t;
}

void merge_table(ConfigTable& base, const ConfigTable& over) {
  for (const auto& [sec, keys] : over) {
    if (!base.count(sec) && sec.rfind("teacher.", 0) == 0) base[sec] = kTeacherDefaults;
    for (const auto& [key, value] : keys) base[sec][key] = value;
  }
  // A new teacher list drops inherited sections it no longer names; sections
  // supplied alongside it stay so that strays are still reported.
  if (over.count("teachers") && over.at("teachers").count("names")) {
    const auto names = split_list(over.at("teachers").at("names"));
    std::erase_if(base, [&](const auto& entry) {
      const auto& sec = entry.first;
      return sec.rfind("teacher.", 0) == 0 && !over.count(sec) &&
             std::find(names.begin(), names.end(), sec.substr(8)) == names.end();
    });
  }
}

void apply_override(ConfigTable& table, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const std::string lhs = assignment.substr(0, eq);
  const auto dot = lhs.rfind('.');
  if (eq == std::string::npos || dot == std::string::npos || dot == 0 || dot + 1 == lhs.size()) {
    throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  }
  ConfigTable one;
  one[lhs.substr(0, dot)][lhs.substr(dot + 1)] = assignment.substr(eq + 1);
  merge_table(table, one);
}

std::vector<std::string> config_violations(const ConfigTable& table) {
  std::vector<std::string> errors;
  build(table, errors);
  return errors;
}

RunConfig resolve_config(const ConfigTable& table) {
  std::vector<std::string> errors;
  RunConfig c = build(table, errors);
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

std::string to_ini(const ConfigTable& table) {
  std::string out;
  for (const auto& [sec, keys] : table) {
    out += "[" + sec + "]\n";
    for (const auto& [key, value] : keys) out += key + " = " + value + "\n";
    out += "\n";
  }
  return out;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"synth", "extract", "gate", "student", "probe", "finetune"};
  return names;
}

std::string stage_hash(const ConfigTable& table, std::string_view stage) {
  // Sections each stage adds on top of its upstream.
  static const std::map<std::string, std::vector<std::string>, std::less<>> own = {
      {"synth", {"data"}},        {"extract", {"mask", "teachers", "teacher."}},
      {"gate", {"gate", "stage1"}}, {"student", {"student", "stage2"}},
      {"probe", {"probe"}},       {"finetune", {"finetune"}}};
  const auto& names = stage_names();
  const auto it = std::find(names.begin(), names.end(), stage);
  if (it == names.end()) throw std::invalid_argument("unknown stage " + std::string(stage));
  std::set<std::string> prefixes;
  // probe and finetune are siblings: both sit on top of the student.
  for (auto s = names.begin(); s <= it; ++s) {
    if ((*s == "probe" && stage == "finetune")) continue;
    for (const auto& p : own.at(*s)) prefixes.insert(p);
  }
  std::string text = "seed=" + table.at("run").at("seed") + "\n";
  for (const auto& [sec, keys] : table) {
    const bool used = std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) {
      return p.back() == '.' ? sec.rfind(p, 0) == 0 : sec == p;
    });
    if (!used) continue;
    text += "[" + sec + "]\n";
    for (const auto& [key, value] : keys) text += key + "=" + value + "\n";
  }
  const auto crc = data::crc32(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc);
  return buf;
}

}  // namespace mtdp::cli
