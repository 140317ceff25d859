#pragma once

// Little-endian binary helpers for the BW* file family.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "bowkit/error.hpp"

namespace bowkit::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
inline T to_le(T v) noexcept {
  if constexpr (std::endian::native == std::endian::big) {
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b.data(), sizeof(T));
  }
  return v;
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void magic(std::string_view m) { bytes(m.data(), m.size()); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { v = to_le(v); bytes(&v, 2); }
  void u32(std::uint32_t v) { v = to_le(v); bytes(&v, 4); }
  void u64(std::uint64_t v) { v = to_le(v); bytes(&v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  /// u8 length prefix + UTF-8 bytes
  void tag(std::string_view s) {
    if (s.size() > 255) fail(Errc::InvalidArgument, "tag longer than 255 bytes");
    u8(static_cast<std::uint8_t>(s.size()));
    bytes(s.data(), s.size());
  }

  const std::vector<unsigned char>& buffer() const noexcept { return buf_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoFailure, "cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) fail(Errc::IoFailure, "short write to " + path);
  }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> buf) : buf_(std::move(buf)) {}

  static Reader open(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::IoFailure, "cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return Reader(std::move(buf));
  }

  void bytes(void* p, std::size_t n) {
    if (remaining() < n) fail(Errc::TruncatedFile, "unexpected end of file at byte " + std::to_string(pos_));
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    if (remaining() < m.size()) fail(Errc::BadMagic, "file too short for magic");
    bytes(got.data(), got.size());
    if (got != m) fail(Errc::BadMagic, "expected '" + std::string(m) + "'");
  }
  void expect_version(std::uint32_t want) {
    const std::uint32_t v = u32();
    if (v != want) fail(Errc::VersionUnsupported, "version " + std::to_string(v));
  }
  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  std::uint16_t u16() { std::uint16_t v; bytes(&v, 2); return to_le(v); }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return to_le(v); }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return to_le(v); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  float finite_f32() {
    const float v = f32();
    if (!std::isfinite(v)) fail(Errc::NonFiniteValue, "non-finite value at byte " + std::to_string(pos_ - 4));
    return v;
  }
  std::string tag() {
    const std::size_t n = u8();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  std::size_t remaining() const noexcept { return buf_.size() - pos_; }

 private:
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace bowkit::io
