#pragma once

#include <cstdint>
#include <vector>

#include "lumamba/recording.hpp"

namespace lumamba {

// Frequency band carrying a class's oscillatory power.
struct Band {
  double lo_hz;
  double hi_hz;
};

struct SynthConfig {
  std::vector<int> montages{20};  // template sizes
  int classes = 2;
  int subjects = 8;
  double seconds = 60.0;
  double fs = 256.0;
  double rhythm_amplitude = 2.0;
  double line_noise = 0.3;  // 50 Hz amplitude
  // Empty means the defaults: 8-12 Hz, 2-4 Hz, 13-20 Hz, 20-30 Hz, 4-7 Hz.
  std::vector<Band> class_bands;
};

std::vector<Band> default_class_bands(int classes);

// One labeled recording per (montage, subject, class); deterministic in seed.
// Classes differ by band power over a 1/f-like background with per-subject gain.
std::vector<Recording> synth_dataset(const SynthConfig& config, std::uint64_t seed);

}  // namespace lumamba
