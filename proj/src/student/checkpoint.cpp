#include "mtdp/student/checkpoint.hpp"

namespace mtdp::student {

using data::FormatError;

void write_param_table(data::ByteWriter& w, const nk::ParamSet<float>& params, const nk::ParamSet<float>* extra) {
  const std::size_t n = params.size() + (extra ? extra->size() : 0);
  w.u32(static_cast<std::uint32_t>(n));
  auto put = [&](const nk::ParamSet<float>& set) {
    for (const auto* p : set.all()) {
      w.str16(p->name);
      w.u8(static_cast<std::uint8_t>(p->value.rank()));
      for (std::size_t e : p->value.shape()) w.u32(static_cast<std::uint32_t>(e));
      w.f32s(p->value.values());
    }
  };
  put(params);
  if (extra) put(*extra);
}

void read_param_table(data::ByteReader& r, nk::ParamSet<float>& params, nk::ParamSet<float>* extra) {
  const std::uint32_t n = r.u32();
  if (n < params.size() || (!extra && n != params.size())) {
    throw FormatError(FormatError::Kind::DimensionMismatch,
                      r.context() + ": dimension mismatch (" + std::to_string(n) + " parameters, model has " +
                          std::to_string(params.size()) + ")",
                      params.size(), n);
  }
  for (auto* p : params.all()) {
    const std::string name = r.str16();
    if (name != p->name) {
      throw FormatError(FormatError::Kind::Malformed,
                        r.context() + ": parameter '" + name + "' where '" + p->name + "' was expected");
    }
    nk::Shape shape(r.u8());
    for (auto& e : shape) e = r.u32();
    if (shape != p->value.shape()) {
      throw FormatError(FormatError::Kind::DimensionMismatch,
                        r.context() + ": dimension mismatch for " + name + " (file " + nk::to_string(shape) +
                            ", model " + nk::to_string(p->value.shape()) + ")");
    }
    r.f32s(p->value.values());
  }
  for (std::size_t i = params.size(); i < n; ++i) {
    std::string name = r.str16();
    nk::Shape shape(r.u8());
    for (auto& e : shape) e = r.u32();
    nk::Tensor<float> value(shape);
    r.f32s(value.values());
    try {
      extra->add(std::move(name), std::move(value));
    } catch (const ConfigError& e) {
      throw FormatError(FormatError::Kind::Malformed, r.context() + ": " + e.what());
    }
  }
}

void write_student_config(data::ByteWriter& w, const StudentConfig& c) {
  w.u32(c.channels);
  w.u32(c.timesteps);
  w.u32(c.patch_len);
  w.u32(c.d_model);
  w.u32(c.n_layers);
  w.u32(c.spatial_heads);
  w.u32(c.temporal_heads);
  w.u32(c.ffn_dim);
  w.f32(c.dropout);
  w.u32(c.pos_kernel_c);
  w.u32(c.pos_kernel_n);
  w.u32(c.use_positional ? 1 : 0);
}

StudentConfig read_student_config(data::ByteReader& r) {
  StudentConfig c;
  c.channels = r.u32();
  c.timesteps = r.u32();
  c.patch_len = r.u32();
  c.d_model = r.u32();
  c.n_layers = r.u32();
  c.spatial_heads = r.u32();
  c.temporal_heads = r.u32();
  c.ffn_dim = r.u32();
  c.dropout = r.f32();
  c.pos_kernel_c = r.u32();
  c.pos_kernel_n = r.u32();
  c.use_positional = r.u32() != 0;
  if (!c.violations().empty()) {
    throw FormatError(FormatError::Kind::Malformed, r.context() + ": stored config is invalid: " + c.violations()[0]);
  }
  return c;
}

std::vector<std::uint8_t> encode_student(const Encoder<float>& enc, const nk::ParamSet<float>* head) {
  data::ByteWriter w;
  w.magic("MTDW");
  w.u32(kStudentCheckpointVersion);
  write_student_config(w, enc.config());
  write_param_table(w, enc.params(), head);
  w.crc_trailer();
  return w.take();
}

LoadedStudent decode_student(std::span<const std::uint8_t> bytes, const std::string& context) {
  data::ByteReader r(bytes, context);
  r.expect_magic("MTDW");
  r.expect_version(kStudentCheckpointVersion);
  r.verify_crc_trailer();
  LoadedStudent out;
  out.encoder = std::make_unique<Encoder<float>>(read_student_config(r), nk::Stream(0));
  out.head = std::make_unique<nk::ParamSet<float>>();
  read_param_table(r, out.encoder->params(), out.head.get());
  if (!r.at_end()) throw FormatError(FormatError::Kind::Malformed, context + ": trailing bytes after parameter table");
  return out;
}

void save_student(const Encoder<float>& enc, const std::filesystem::path& path, const nk::ParamSet<float>* head) {
  data::write_file_atomic(path, encode_student(enc, head));
}

LoadedStudent load_student(const std::filesystem::path& path) {
  return decode_student(data::read_file(path), path.string());
}

}  // namespace mtdp::student
