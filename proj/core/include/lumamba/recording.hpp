#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lumamba/array.hpp"
#include "lumamba/montage.hpp"

namespace lumamba {

// One multi-channel recording: samples are C x T, row-major.
struct Recording {
  Montage montage;
  float fs = 256.0f;
  Array samples;
  std::optional<int> label;
  std::string subject;

  std::size_t channels() const { return samples.dim(0); }
  std::size_t length() const { return samples.dim(1); }
  // Throws if shape, montage or finiteness invariants do not hold.
  void validate() const;
};

// "LUM1" container, version 1, little-endian; one recording per file.
std::vector<std::uint8_t> encode_recording(const Recording& rec);
Recording decode_recording(std::span<const std::uint8_t> bytes);
void write_recording(const Recording& rec, const std::filesystem::path& path);
Recording read_recording(const std::filesystem::path& path);

// All *.lum files of a directory, sorted by file name.
std::vector<std::filesystem::path> list_recordings(const std::filesystem::path& dir);

}  // namespace lumamba
