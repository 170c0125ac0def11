#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mtdp::data {

class FormatError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, VersionMismatch, Truncated, Checksum, DimensionMismatch, Malformed };

  FormatError(Kind kind, const std::string& what, std::uint64_t expected = 0, std::uint64_t actual = 0)
      : std::runtime_error(what), kind_(kind), expected_(expected), actual_(actual) {}

  Kind kind() const { return kind_; }
  // Byte counts for Truncated, versions for VersionMismatch, extents for DimensionMismatch.
  std::uint64_t expected() const { return expected_; }
  std::uint64_t actual() const { return actual_; }

 private:
  Kind kind_;
  std::uint64_t expected_, actual_;
};

/// Raised when an input or upstream artifact is absent (a missing file, a
/// stage that has not been run).
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n);
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void f32s(std::span<const float> v);
  void magic(std::string_view m) { raw(m.data(), m.size()); }
  /// u16 length prefix then UTF-8 bytes.
  void str16(std::string_view s);
  /// Appends CRC32 of everything written so far.
  void crc_trailer();

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader; every underflow is a Truncated error
/// carrying the total size the read required and the size available.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  void need(std::size_t n) const;
  void raw(void* out, std::size_t n);
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  float f32();
  void f32s(std::span<float> out);
  std::string str16();
  void expect_magic(std::string_view m);
  void expect_version(std::uint32_t version);
  /// Verifies a trailing CRC32 over all preceding bytes; call before parsing.
  void verify_crc_trailer();

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return limit() - pos_; }
  bool at_end() const { return pos_ == limit(); }
  const std::string& context() const { return context_; }

 private:
  std::size_t limit() const { return bytes_.size() - (crc_checked_ ? 4 : 0); }

  std::span<const std::uint8_t> bytes_;
  std::string context_;
  std::size_t pos_ = 0;
  bool crc_checked_ = false;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes via a sibling temporary then renames, so readers never observe a
/// partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace mtdp::data
