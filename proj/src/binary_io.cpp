#include "resemg/binary_io.hpp"

#include <fstream>
#include <iterator>
#include <limits>

namespace resemg::io {

void ByteWriter::string_u16(std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw UsageError("string too long for u16 length prefix: " + std::to_string(s.size()));
  }
  put(static_cast<std::uint16_t>(s.size()));
  bytes(s.data(), s.size());
}

const std::uint8_t* ByteReader::take(std::size_t n, std::string_view field) {
  if (n > remaining()) {
    throw FormatError(context_ + ": truncated while reading " + std::string(field));
  }
  const auto* p = buf_.data() + pos_;
  pos_ += n;
  return p;
}

void ByteReader::expect_tag(std::string_view magic, std::string_view field) {
  const auto* p = take(magic.size(), field);
  if (std::memcmp(p, magic.data(), magic.size()) != 0) {
    throw FormatError(context_ + ": bad " + std::string(field) + " (expected \"" +
                      std::string(magic) + "\")");
  }
}

std::vector<float> ByteReader::floats(std::size_t count, std::string_view field) {
  if (count > remaining() / sizeof(float)) {
    throw FormatError(context_ + ": truncated while reading " + std::string(field));
  }
  std::vector<float> out(count);
  std::memcpy(out.data(), take(count * sizeof(float), field), count * sizeof(float));
  return out;
}

std::string ByteReader::string_u16(std::string_view field) {
  const auto n = get<std::uint16_t>(field);
  const auto* p = take(n, field);
  return std::string(reinterpret_cast<const char*>(p), n);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw UsageError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace resemg::io
