#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lumamba/array.hpp"
#include "lumamba/recording.hpp"

namespace lumamba {

inline constexpr double kTargetRate = 256.0;

// Transposed direct-form II second-order section, a0 normalized to 1.
struct Biquad {
  double b0, b1, b2, a1, a2;
};
using Sos = std::vector<Biquad>;

// Butterworth order-4 high-pass at 0.1 Hz, order-4 low-pass at 75 Hz, and a
// Q=30 notch at 50 Hz. Requires fs > 150.
Sos design_eeg_filter(double fs);
std::complex<double> sos_response(const Sos& sos, double freq_hz, double fs);
// Zero-phase forward-backward filtering with odd-extension padding and
// steady-state initial conditions.
std::vector<double> sos_filtfilt(const Sos& sos, std::span<const double> x);

Recording bandpass_notch(const Recording& rec);

// Polyphase rational resampler with a Kaiser-windowed sinc (beta 8.6).
std::vector<double> resample_poly(std::span<const double> x, std::size_t up, std::size_t down,
                                  std::size_t out_len);
// up/down such that fs * up / down == target (approximated for non-integer rates).
std::pair<std::size_t, std::size_t> resample_ratio(double fs, double target);
Recording resample(const Recording& rec, double target_fs = kTargetRate);

// Non-overlapping windows cut from a recording.
struct WindowBatch {
  Montage montage;
  Array windows;  // B x C x Tw
  std::vector<int> labels;  // one per window when the recording is labeled
  std::vector<std::size_t> offsets;  // start sample of each window in the source
  std::string subject;
  double seconds = 5.0;

  std::size_t count() const { return windows.empty() ? 0 : windows.dim(0); }
  std::size_t window_length() const { return windows.dim(2); }
};

std::size_t window_samples(double seconds);
// Trailing samples that do not fill a window are dropped. Requires a 256 Hz recording.
WindowBatch make_windows(const Recording& rec, double seconds = 5.0);
// Per-window, per-channel zero mean and unit variance (constant channels map to zero).
void zscore_windows(Array& windows);

// bandpass_notch, then resample to 256 Hz.
Recording preprocess(const Recording& rec);

}  // namespace lumamba
