#include "mtdp/dataio/binio.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace mtdp::data {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    c = ::crc32(c, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

void ByteWriter::raw(const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  buf_.insert(buf_.end(), b, b + n);
}

void ByteWriter::u16(std::uint16_t v) { raw(&v, 2); }
void ByteWriter::u32(std::uint32_t v) { raw(&v, 4); }
void ByteWriter::f32(float v) { raw(&v, 4); }
void ByteWriter::f32s(std::span<const float> v) { raw(v.data(), v.size() * 4); }

void ByteWriter::str16(std::string_view s) {
  if (s.size() > 0xffff) throw std::length_error("string longer than 65535 bytes: " + std::string(s.substr(0, 32)));
  u16(static_cast<std::uint16_t>(s.size()));
  raw(s.data(), s.size());
}

void ByteWriter::crc_trailer() { u32(crc32(buf_)); }

void ByteReader::need(std::size_t n) const {
  if (pos_ + n > limit()) {
    throw FormatError(FormatError::Kind::Truncated,
                      context_ + ": truncated (need " + std::to_string(pos_ + n) + " bytes, have " +
                          std::to_string(limit()) + ")",
                      pos_ + n, limit());
  }
}

void ByteReader::raw(void* out, std::size_t n) {
  need(n);
  std::memcpy(out, bytes_.data() + pos_, n);
  pos_ += n;
}

std::uint8_t ByteReader::u8() {
  std::uint8_t v;
  raw(&v, 1);
  return v;
}

std::uint16_t ByteReader::u16() {
  std::uint16_t v;
  raw(&v, 2);
  return v;
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v;
  raw(&v, 4);
  return v;
}

float ByteReader::f32() {
  float v;
  raw(&v, 4);
  return v;
}

void ByteReader::f32s(std::span<float> out) { raw(out.data(), out.size() * 4); }

std::string ByteReader::str16() {
  const std::uint16_t n = u16();
  std::string s(n, '\0');
  raw(s.data(), n);
  return s;
}

void ByteReader::expect_magic(std::string_view m) {
  if (bytes_.size() < m.size() || std::memcmp(bytes_.data() + pos_, m.data(), m.size()) != 0) {
    throw FormatError(FormatError::Kind::BadMagic, context_ + ": bad magic (expected \"" + std::string(m) + "\")");
  }
  pos_ += m.size();
}

void ByteReader::expect_version(std::uint32_t version) {
  const std::uint32_t v = u32();
  if (v != version) {
    throw FormatError(FormatError::Kind::VersionMismatch,
                      context_ + ": version mismatch (expected " + std::to_string(version) + ", found " +
                          std::to_string(v) + ")",
                      version, v);
  }
}

void ByteReader::verify_crc_trailer() {
  if (bytes_.size() < 4) {
    throw FormatError(FormatError::Kind::Truncated, context_ + ": truncated (no checksum trailer)", 4, bytes_.size());
  }
  const std::size_t body = bytes_.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes_.data() + body, 4);
  if (crc32(bytes_.first(body)) != stored) {
    throw FormatError(FormatError::Kind::Checksum, context_ + ": checksum mismatch");
  }
  crc_checked_ = true;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("read failed: " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace mtdp::data
