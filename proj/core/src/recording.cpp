#include "lumamba/recording.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "lumamba/binary_io.hpp"

namespace lumamba {
namespace {
constexpr std::string_view kMagic = "LUM1";
constexpr std::uint16_t kVersion = 1;
}  // namespace

void Recording::validate() const {
  if (samples.rank() != 2) throw std::invalid_argument("Recording: samples must be C x T");
  if (samples.dim(0) != montage.channels()) {
    throw std::invalid_argument("Recording: " + std::to_string(samples.dim(0)) + " sample rows for " +
                                std::to_string(montage.channels()) + " channels");
  }
  if (!(fs > 0.0f)) throw std::invalid_argument("Recording: sampling rate must be positive");
  if (!samples.all_finite()) throw std::invalid_argument("Recording: non-finite samples");
}

std::vector<std::uint8_t> encode_recording(const Recording& rec) {
  rec.validate();
  ByteWriter w;
  w.raw(kMagic);
  w.u16(kVersion);
  w.u16(static_cast<std::uint16_t>(rec.channels()));
  w.u64(rec.length());
  w.f32(rec.fs);
  w.u8(rec.label.has_value() ? 1 : 0);
  w.i32(rec.label.value_or(0));
  w.str16(rec.subject);
  for (std::size_t c = 0; c < rec.channels(); ++c) {
    w.str16(rec.montage.names()[c]);
    for (float v : rec.montage.coords()[c]) w.f32(v);
  }
  for (Real v : rec.samples.data()) w.f32(static_cast<float>(v));
  return w.take();
}

Recording decode_recording(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.raw(4) != kMagic) throw std::runtime_error("recording: bad magic (expected LUM1)");
  const auto version = r.u16();
  if (version != kVersion) throw std::runtime_error("recording: unsupported version " + std::to_string(version));
  const std::size_t channels = r.u16();
  const std::uint64_t length = r.u64();
  if (channels == 0 || length == 0) throw std::runtime_error("recording: empty recording");
  Recording rec;
  rec.fs = r.f32();
  const bool has_label = r.u8() != 0;
  const std::int32_t label = r.i32();
  if (has_label) rec.label = label;
  rec.subject = r.str16();
  std::vector<std::string> names;
  std::vector<Coord> coords;
  for (std::size_t c = 0; c < channels; ++c) {
    names.push_back(r.str16());
    Coord xyz{};
    for (auto& v : xyz) v = r.f32();
    coords.push_back(xyz);
  }
  rec.montage = Montage(std::move(names), std::move(coords));
  if (length > r.remaining() / (4 * channels)) throw std::runtime_error("unexpected end of data (truncated file)");
  rec.samples = Array(Shape{channels, static_cast<std::size_t>(length)});
  for (Real& v : rec.samples.data()) v = static_cast<Real>(r.f32());
  if (r.remaining() != 0) throw std::runtime_error("recording: trailing bytes after samples");
  rec.validate();
  return rec;
}

void write_recording(const Recording& rec, const std::filesystem::path& path) {
  write_file(path, encode_recording(rec));
}

Recording read_recording(const std::filesystem::path& path) {
  try {
    return decode_recording(read_file(path));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::vector<std::filesystem::path> list_recordings(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".lum") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace lumamba
