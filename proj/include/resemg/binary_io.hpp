#pragma once

// Little-endian byte buffers shared by the checkpoint, signal and packed
// dataset formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "resemg/errors.hpp"

namespace resemg::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swapping");

class ByteWriter {
 public:
  void bytes(const void* src, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(src);
    buf_.insert(buf_.end(), p, p + n);
  }
  void tag(std::string_view magic) { bytes(magic.data(), magic.size()); }
  template <typename T>
  void put(T value) {
    bytes(&value, sizeof(T));
  }
  void floats(std::span<const float> values) { bytes(values.data(), values.size_bytes()); }
  void string_u16(std::string_view s);

  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader. Every failure names the field being read.
class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> bytes, std::string context)
      : buf_(std::move(bytes)), context_(std::move(context)) {}

  void expect_tag(std::string_view magic, std::string_view field);
  template <typename T>
  T get(std::string_view field) {
    T value;
    std::memcpy(&value, take(sizeof(T), field), sizeof(T));
    return value;
  }
  std::vector<float> floats(std::size_t count, std::string_view field);
  std::string string_u16(std::string_view field);

  std::size_t remaining() const { return buf_.size() - pos_; }
  const std::string& context() const { return context_; }

 private:
  const std::uint8_t* take(std::size_t n, std::string_view field);

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::string context_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes via a sibling temporary and renames, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace resemg::io
