#include "lumamba/binary_io.hpp"

#include <fstream>
#include <iterator>
#include <limits>

namespace lumamba {

void ByteWriter::str16(std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max()) throw std::length_error("string too long for u16 prefix");
  u16(static_cast<std::uint16_t>(s.size()));
  raw(s);
}

void ByteWriter::str32(std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint32_t>::max()) throw std::length_error("string too long for u32 prefix");
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s);
}

std::uint64_t ByteReader::get(int n) {
  if (remaining() < static_cast<std::size_t>(n)) throw std::runtime_error("unexpected end of data (truncated file)");
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
  pos_ += static_cast<std::size_t>(n);
  return v;
}

std::string ByteReader::raw(std::size_t n) {
  if (remaining() < n) throw std::runtime_error("unexpected end of data (truncated file)");
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace lumamba
