#pragma once

#include <filesystem>
#include <memory>

#include "mtdp/dataio/binio.hpp"
#include "mtdp/student/encoder.hpp"

namespace mtdp::student {

inline constexpr std::uint32_t kStudentCheckpointVersion = 1;

/// Named parameter table: u32 count, then per parameter name (u16 + UTF-8),
/// rank u8, extents u32 each, f32 payload. `extra` entries (e.g. a
/// projection head) follow the model's own.
void write_param_table(data::ByteWriter& w, const nk::ParamSet<float>& params,
                       const nk::ParamSet<float>* extra = nullptr);
/// Loads values into an existing set; names, order and shapes must match.
/// Entries beyond the set are created in `extra`, or rejected when it is null.
void read_param_table(data::ByteReader& r, nk::ParamSet<float>& params, nk::ParamSet<float>* extra = nullptr);

void write_student_config(data::ByteWriter& w, const StudentConfig& cfg);
StudentConfig read_student_config(data::ByteReader& r);

struct LoadedStudent {
  std::unique_ptr<Encoder<float>> encoder;
  /// Parameters stored after the encoder's (the distillation projection); may be empty.
  std::unique_ptr<nk::ParamSet<float>> head;
};

std::vector<std::uint8_t> encode_student(const Encoder<float>& enc, const nk::ParamSet<float>* head = nullptr);
LoadedStudent decode_student(std::span<const std::uint8_t> bytes, const std::string& context = "student checkpoint");
void save_student(const Encoder<float>& enc, const std::filesystem::path& path,
                  const nk::ParamSet<float>* head = nullptr);
LoadedStudent load_student(const std::filesystem::path& path);

}  // namespace mtdp::student
