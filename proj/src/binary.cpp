#include "earthgan/binary.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

namespace earthgan::binary {

void Writer::f32s(std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    bytes(values.data(), values.size_bytes());
  } else {
    for (float v : values) f32(v);
  }
}

void Writer::padded(std::string_view s, std::size_t width) {
  if (s.size() > width) {
    throw ValidationError("string field '" + std::string(s) + "' exceeds " +
                          std::to_string(width) + " bytes");
  }
  text(s);
  buf_.insert(buf_.end(), width - s.size(), 0);
}

std::span<const std::uint8_t> Reader::take(std::size_t n) {
  if (n > remaining()) {
    throw TruncatedError(context_ + ": truncated at byte " + std::to_string(pos_) +
                         " (needed " + std::to_string(n) + ", have " +
                         std::to_string(remaining()) + ")");
  }
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::string Reader::text(std::size_t n) {
  auto b = take(n);
  return std::string(b.begin(), b.end());
}

void Reader::f32s(std::span<float> out) {
  auto b = take(out.size_bytes());
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), b.data(), b.size());
  } else {
    Reader sub(b, context_);
    for (float& v : out) v = sub.f32();
  }
}

std::string Reader::padded(std::size_t width) {
  std::string s = text(width);
  s.resize(std::strlen(s.c_str()));
  return s;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  return data;
}

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string());
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = ::crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace earthgan::binary
