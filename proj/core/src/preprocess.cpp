#include "lumamba/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace lumamba {
namespace {

constexpr double kHighPassHz = 0.1;
constexpr double kLowPassHz = 75.0;
constexpr double kNotchHz = 50.0;
constexpr double kNotchQ = 30.0;
constexpr int kButterOrder = 4;
constexpr double kKaiserBeta = 8.6;

// Bilinear transform of (b2 s^2 + b1 s + b0) / (a2 s^2 + a1 s + a0) with s = k (z-1)/(z+1).
Biquad bilinear(double b2, double b1, double b0, double a2, double a1, double a0, double k) {
  const double k2 = k * k;
  const double d = a2 * k2 + a1 * k + a0;
  return Biquad{(b2 * k2 + b1 * k + b0) / d, 2.0 * (b0 - b2 * k2) / d, (b2 * k2 - b1 * k + b0) / d,
                2.0 * (a0 - a2 * k2) / d, (a2 * k2 - a1 * k + a0) / d};
}

// Damping terms of the conjugate pole pairs of an order-n Butterworth prototype.
std::vector<double> butter_damping(int order) {
  std::vector<double> out;
  for (int i = 0; i < order / 2; ++i) {
    const double theta = std::numbers::pi * (2.0 * i + order + 1) / (2.0 * order);
    out.push_back(-2.0 * std::cos(theta));
  }
  return out;
}

double dc_gain(const Biquad& s) { return (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2); }

void sos_run(const Sos& sos, std::vector<double>& x) {
  if (x.empty()) return;
  double level = x.front();
  for (const auto& s : sos) {
    // Steady state for a constant input equal to the first sample.
    const double g = dc_gain(s);
    double z1 = g * level - s.b0 * level;
    double z2 = s.b2 * level - s.a2 * g * level;
    for (double& v : x) {
      const double in = v;
      const double y = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * y + z2;
      z2 = s.b2 * in - s.a2 * y;
      v = y;
    }
    level *= g;
  }
}

std::vector<double> row(const Array& a, std::size_t r) {
  const std::size_t t = a.dim(1);
  const Real* p = a.data().data() + r * t;
  return std::vector<double>(p, p + t);
}

void set_row(Array& a, std::size_t r, std::span<const double> v) {
  Real* p = a.data().data() + r * a.dim(1);
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = static_cast<Real>(v[i]);
}

std::vector<double> kaiser_sinc(std::size_t up, std::size_t down) {
  const std::size_t m = std::max(up, down);
  const std::size_t half = 10 * m;
  const std::size_t len = 2 * half + 1;
  const double fc = 1.0 / static_cast<double>(m);
  const double i0b = std::cyl_bessel_i(0.0, kKaiserBeta);
  std::vector<double> h(len);
  double total = 0.0;
  for (std::size_t k = 0; k < len; ++k) {
    const double x = fc * (static_cast<double>(k) - static_cast<double>(half));
    const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double r = 2.0 * static_cast<double>(k) / static_cast<double>(len - 1) - 1.0;
    const double w = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    h[k] = sinc * w;
    total += h[k];
  }
  for (double& v : h) v *= static_cast<double>(up) / total;
  return h;
}

}  // namespace

Sos design_eeg_filter(double fs) {
  if (!(fs > 2.0 * kLowPassHz)) {
    throw std::invalid_argument("bandpass_notch: sampling rate " + std::to_string(fs) +
                                " Hz must exceed 150 Hz");
  }
  const double k = 2.0 * fs;
  Sos sos;
  const double w_hp = k * std::tan(std::numbers::pi * kHighPassHz / fs);
  const double w_lp = k * std::tan(std::numbers::pi * kLowPassHz / fs);
  for (double d : butter_damping(kButterOrder)) {
    sos.push_back(bilinear(1.0, 0.0, 0.0, 1.0, d * w_hp, w_hp * w_hp, k));
  }
  for (double d : butter_damping(kButterOrder)) {
    sos.push_back(bilinear(0.0, 0.0, w_lp * w_lp, 1.0, d * w_lp, w_lp * w_lp, k));
  }
  const double w0 = 2.0 * std::numbers::pi * kNotchHz / fs;
  const double alpha = std::sin(w0) / (2.0 * kNotchQ);
  const double a0 = 1.0 + alpha;
  sos.push_back(Biquad{1.0 / a0, -2.0 * std::cos(w0) / a0, 1.0 / a0, -2.0 * std::cos(w0) / a0,
                       (1.0 - alpha) / a0});
  return sos;
}

std::complex<double> sos_response(const Sos& sos, double freq_hz, double fs) {
  const double w = 2.0 * std::numbers::pi * freq_hz / fs;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h = 1.0;
  for (const auto& s : sos) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return h;
}

std::vector<double> sos_filtfilt(const Sos& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t pad = std::min<std::size_t>(3 * (2 * sos.size() + 1), n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);
  sos_run(sos, ext);
  std::reverse(ext.begin(), ext.end());
  sos_run(sos, ext);
  std::reverse(ext.begin(), ext.end());
  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

Recording bandpass_notch(const Recording& rec) {
  rec.validate();
  const Sos sos = design_eeg_filter(rec.fs);
  Recording out = rec;
  for (std::size_t c = 0; c < rec.channels(); ++c) {
    const auto x = row(rec.samples, c);
    set_row(out.samples, c, sos_filtfilt(sos, x));
  }
  return out;
}

std::pair<std::size_t, std::size_t> resample_ratio(double fs, double target) {
  if (!(fs > 0.0)) throw std::invalid_argument("resample: sampling rate must be positive");
  const double rf = std::round(fs);
  const double rt = std::round(target);
  if (std::abs(fs - rf) < 1e-6 && std::abs(target - rt) < 1e-6) {
    const auto a = static_cast<std::size_t>(rt);
    const auto b = static_cast<std::size_t>(rf);
    const auto g = std::gcd(a, b);
    return {a / g, b / g};
  }
  // Continued-fraction approximation of target / fs with a bounded denominator.
  const double r = target / fs;
  std::size_t p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double x = r;
  for (int it = 0; it < 64; ++it) {
    const double a = std::floor(x);
    const auto ai = static_cast<std::size_t>(a);
    const std::size_t p2 = ai * p1 + p0, q2 = ai * q1 + q0;
    if (q2 > 1000) break;
    p0 = p1; q0 = q1; p1 = p2; q1 = q2;
    if (x - a < 1e-12) break;
    x = 1.0 / (x - a);
  }
  if (p1 == 0) p1 = 1;
  return {p1, q1};
}

std::vector<double> resample_poly(std::span<const double> x, std::size_t up, std::size_t down,
                                  std::size_t out_len) {
  if (up == 0 || down == 0) throw std::invalid_argument("resample_poly: zero factor");
  if (up == 1 && down == 1) {
    std::vector<double> out(x.begin(), x.end());
    out.resize(out_len, 0.0);
    return out;
  }
  const auto h = kaiser_sinc(up, down);
  const auto len = static_cast<std::ptrdiff_t>(h.size());
  const auto half = (len - 1) / 2;
  const auto n_in = static_cast<std::ptrdiff_t>(x.size());
  const auto u = static_cast<std::ptrdiff_t>(up);
  std::vector<double> out(out_len, 0.0);
  for (std::size_t n = 0; n < out_len; ++n) {
    // Position of output n on the upsampled grid, shifted to center the filter.
    const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(n * down) + half;
    std::ptrdiff_t i_lo = t - len + 1 <= 0 ? 0 : (t - len + 1 + u - 1) / u;
    std::ptrdiff_t i_hi = std::min(t / u, n_in - 1);
    double acc = 0.0;
    for (std::ptrdiff_t i = i_lo; i <= i_hi; ++i) acc += x[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(t - i * u)];
    out[n] = acc;
  }
  return out;
}

Recording resample(const Recording& rec, double target_fs) {
  rec.validate();
  if (static_cast<double>(rec.fs) == target_fs) return rec;
  const auto [up, down] = resample_ratio(rec.fs, target_fs);
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(rec.length()) * target_fs / static_cast<double>(rec.fs)));
  if (out_len == 0) throw std::invalid_argument("resample: output would be empty");
  Recording out = rec;
  out.fs = static_cast<float>(target_fs);
  out.samples = Array(Shape{rec.channels(), out_len});
  for (std::size_t c = 0; c < rec.channels(); ++c) {
    set_row(out.samples, c, resample_poly(row(rec.samples, c), up, down, out_len));
  }
  return out;
}

std::size_t window_samples(double seconds) {
  const double n = seconds * kTargetRate;
  const double r = std::round(n);
  if (!(seconds > 0.0) || std::abs(n - r) > 1e-9 || r < 1.0) {
    throw std::invalid_argument("window: " + std::to_string(seconds) +
                                " s is not a whole number of samples at 256 Hz");
  }
  return static_cast<std::size_t>(r);
}

WindowBatch make_windows(const Recording& rec, double seconds) {
  const std::size_t tw = window_samples(seconds);
  if (static_cast<double>(rec.fs) != kTargetRate) {
    throw std::invalid_argument("window: recording must be at 256 Hz, got " + std::to_string(rec.fs));
  }
  WindowBatch batch;
  batch.montage = rec.montage;
  batch.subject = rec.subject;
  batch.seconds = seconds;
  const std::size_t count = rec.length() / tw;
  const std::size_t c = rec.channels();
  if (count == 0) return batch;
  batch.windows = Array(Shape{count, c, tw});
  const Real* src = rec.samples.data().data();
  Real* dst = batch.windows.data().data();
  for (std::size_t b = 0; b < count; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::copy_n(src + ch * rec.length() + b * tw, tw, dst + (b * c + ch) * tw);
    }
    batch.offsets.push_back(b * tw);
    if (rec.label) batch.labels.push_back(*rec.label);
  }
  return batch;
}

void zscore_windows(Array& windows) {
  if (windows.rank() != 3) throw std::invalid_argument("zscore_windows: expected B x C x T");
  const std::size_t t = windows.dim(2);
  const std::size_t rows = windows.dim(0) * windows.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    Real* p = windows.data().data() + r * t;
    double mu = 0.0;
    for (std::size_t i = 0; i < t; ++i) mu += p[i];
    mu /= static_cast<double>(t);
    double var = 0.0;
    for (std::size_t i = 0; i < t; ++i) var += (p[i] - mu) * (p[i] - mu);
    const double sd = std::sqrt(var / static_cast<double>(t));
    for (std::size_t i = 0; i < t; ++i) p[i] = sd > 1e-12 ? static_cast<Real>((p[i] - mu) / sd) : Real(0);
  }
}

Recording preprocess(const Recording& rec) { return resample(bandpass_notch(rec), kTargetRate); }

}  // namespace lumamba
