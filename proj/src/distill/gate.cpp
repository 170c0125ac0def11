#include "mtdp/distill/gate.hpp"

#include "mtdp/student/checkpoint.hpp"

namespace mtdp::distill {

using nk::Tensor;

std::vector<std::string> GateConfig::violations() const {
  std::vector<std::string> v;
  if (teachers.empty()) v.push_back("gate needs at least one teacher");
  if (teachers.size() != dims.size()) v.push_back("gate teacher names and dims differ in count");
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (dims[k] == 0) v.push_back("teacher " + (k < teachers.size() ? teachers[k] : std::to_string(k)) + " has d_k = 0");
    if (dims[k] != d_fuse()) {
      v.push_back("fusion dimension mismatch: teacher " + (k < teachers.size() ? teachers[k] : std::to_string(k)) + " has d_k = " +
                  std::to_string(dims[k]) + " but fusion needs a common dimension " + std::to_string(d_fuse()) +
                  "; configure an aligner");
    }
  }
  return v;
}

void GateConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid gate config:";
  for (const auto& s : v) msg += "\n  " + s;
  throw ConfigError(msg);
}

template <typename Real>
Gate<Real>::Gate(const GateConfig& cfg, nk::Stream init_rng, bool zero_output) : cfg_(cfg) {
  cfg_.validate();
  std::size_t concat = 0;
  for (auto d : cfg_.dims) concat += d;
  nk::Stream g = init_rng.split("gate");
  fc1_ = nk::Linear<Real>(params_, "gate.fc1", concat, cfg_.resolved_hidden(), g);
  fc2_ = nk::Linear<Real>(params_, "gate.fc2", cfg_.resolved_hidden(), cfg_.k(), g);
  if (zero_output) fc2_.weight().value.fill(Real(0));
  for (std::size_t k = 0; k < cfg_.k(); ++k) {
    nk::Stream h = init_rng.split("head").split(k);
    heads_.emplace_back(params_, "head" + std::to_string(k), cfg_.d_fuse(), cfg_.dims[k], h);
  }
}

template <typename Real>
void Gate<Real>::check_reps(const std::vector<Var>& reps) const {
  if (reps.size() != cfg_.k()) {
    throw ShapeError("gate: got " + std::to_string(reps.size()) + " teacher reps, registered " +
                     std::to_string(cfg_.k()));
  }
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const auto& s = reps[k].shape();
    if (s.size() != 2 || s[1] != cfg_.dims[k]) {
      throw ShapeError("gate: rep for " + cfg_.teachers[k] + " has shape " + nk::to_string(s) + ", expected (B, " +
                       std::to_string(cfg_.dims[k]) + ")");
    }
  }
}

template <typename Real>
typename Gate<Real>::Var Gate<Real>::weights(Tape& tape, const std::vector<Var>& reps) const {
  check_reps(reps);
  Var x = reps.size() == 1 ? reps.front() : nk::concat_last(reps);
  return nk::softmax(fc2_(tape, nk::relu(fc1_(tape, x))));
}

template <typename Real>
typename Gate<Real>::Var Gate<Real>::fuse(const Var& w, const std::vector<Var>& reps) const {
  return nk::weighted_sum(w, reps);
}

template <typename Real>
typename Gate<Real>::Var Gate<Real>::denoise_loss(Tape& tape, const std::vector<Var>& masked,
                                                  const std::vector<Var>& clean) const {
  check_reps(clean);
  Var fused = fuse(weights(tape, masked), masked);
  Var loss = nk::squared_l2_loss(heads_[0](tape, fused), clean[0]);
  for (std::size_t k = 1; k < cfg_.k(); ++k) loss = nk::add(loss, nk::squared_l2_loss(heads_[k](tape, fused), clean[k]));
  return loss;
}

template <typename Real>
Tensor<Real> Gate<Real>::weights_of(const std::vector<Tensor<Real>>& reps) const {
  Tape tape;
  tape.set_grad_enabled(false);
  std::vector<Var> vars;
  for (const auto& r : reps) vars.push_back(tape.constant(r));
  return weights(tape, vars).value();
}

template <typename Real>
Tensor<Real> Gate<Real>::fused_of(const std::vector<Tensor<Real>>& reps) const {
  Tape tape;
  tape.set_grad_enabled(false);
  std::vector<Var> vars;
  for (const auto& r : reps) vars.push_back(tape.constant(r));
  return fuse(weights(tape, vars), vars).value();
}

template class Gate<float>;
template class Gate<double>;

std::vector<std::uint8_t> encode_gate(const Gate<float>& gate) {
  const auto& cfg = gate.config();
  data::ByteWriter w;
  w.magic("MTDG");
  w.u32(kGateCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(cfg.k()));
  w.u32(cfg.hidden);
  for (std::size_t k = 0; k < cfg.k(); ++k) {
    w.str16(cfg.teachers[k]);
    w.u32(cfg.dims[k]);
  }
  student::write_param_table(w, gate.params());
  w.crc_trailer();
  return w.take();
}

std::unique_ptr<Gate<float>> decode_gate(std::span<const std::uint8_t> bytes, const std::string& context) {
  data::ByteReader r(bytes, context);
  r.expect_magic("MTDG");
  r.expect_version(kGateCheckpointVersion);
  r.verify_crc_trailer();
  GateConfig cfg;
  const std::uint32_t k = r.u32();
  cfg.hidden = r.u32();
  for (std::uint32_t i = 0; i < k; ++i) {
    cfg.teachers.push_back(r.str16());
    cfg.dims.push_back(r.u32());
  }
  if (!cfg.violations().empty()) {
    throw data::FormatError(data::FormatError::Kind::Malformed, context + ": " + cfg.violations()[0]);
  }
  auto gate = std::make_unique<Gate<float>>(cfg, nk::Stream(0));
  student::read_param_table(r, gate->params());
  if (!r.at_end()) {
    throw data::FormatError(data::FormatError::Kind::Malformed, context + ": trailing bytes after parameter table");
  }
  return gate;
}

void save_gate(const Gate<float>& gate, const std::filesystem::path& path) {
  data::write_file_atomic(path, encode_gate(gate));
}

std::unique_ptr<Gate<float>> load_gate(const std::filesystem::path& path) {
  return decode_gate(data::read_file(path), path.string());
}

}  // namespace mtdp::distill
