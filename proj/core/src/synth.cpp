#include "lumamba/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "lumamba/montage.hpp"
#include "lumamba/rng.hpp"

namespace lumamba {
namespace {

constexpr int kComponents = 3;
constexpr std::array<double, 3> kArPoles = {0.99, 0.9, 0.6};
constexpr std::array<double, 3> kArScales = {0.08, 0.3, 0.5};
constexpr double kWhite = 0.3;
constexpr double kShared = 0.5;

std::array<double, 3> focus_for_class(int k) {
  // Posterior, frontal, left, right, vertex foci cycle through classes.
  static constexpr std::array<std::array<double, 3>, 5> foci = {{
      {0.0, -0.95, 0.3}, {0.0, 0.95, 0.3}, {-0.95, 0.0, 0.3}, {0.95, 0.0, 0.3}, {0.0, 0.0, 1.0}}};
  return foci[static_cast<std::size_t>(k) % foci.size()];
}

// Colored background noise: a few AR(1) processes plus white noise.
class Background {
 public:
  explicit Background(Rng rng) : rng_(rng) {}
  double next() {
    double v = kWhite * rng_.normal();
    for (std::size_t i = 0; i < state_.size(); ++i) {
      state_[i] = kArPoles[i] * state_[i] + std::sqrt(1.0 - kArPoles[i] * kArPoles[i]) * rng_.normal();
      v += kArScales[i] * state_[i];
    }
    return v;
  }

 private:
  Rng rng_;
  std::array<double, 3> state_{};
};

}  // namespace

std::vector<Band> default_class_bands(int classes) {
  static const std::vector<Band> defaults = {{8, 12}, {2, 4}, {13, 20}, {20, 30}, {4, 7}};
  if (classes < 1 || classes > static_cast<int>(defaults.size())) {
    throw std::invalid_argument("synth: default bands cover 1 to 5 classes");
  }
  return {defaults.begin(), defaults.begin() + classes};
}

std::vector<Recording> synth_dataset(const SynthConfig& config, std::uint64_t seed) {
  if (config.subjects < 1 || config.classes < 1) throw std::invalid_argument("synth: need subjects and classes");
  if (!(config.seconds > 0.0) || !(config.fs > 0.0)) throw std::invalid_argument("synth: duration and rate must be positive");
  const auto bands = config.class_bands.empty() ? default_class_bands(config.classes) : config.class_bands;
  if (static_cast<int>(bands.size()) != config.classes) throw std::invalid_argument("synth: one band per class required");
  for (int m : config.montages) (void)montage_template(m);

  const auto length = static_cast<std::size_t>(std::llround(config.seconds * config.fs));
  const double dt = 1.0 / config.fs;
  const double two_pi = 2.0 * std::numbers::pi;
  const Rng root(seed, "synth");
  std::vector<Recording> out;

  for (int m : config.montages) {
    const Montage montage = montage_template(m);
    const std::size_t channels = montage.channels();
    for (int s = 0; s < config.subjects; ++s) {
      Rng subject_rng = root.stream("subject/" + std::to_string(s));
      const double gain = subject_rng.uniform(0.6, 1.4);
      const double shift = subject_rng.uniform(-0.5, 0.5);
      for (int k = 0; k < config.classes; ++k) {
        Rng rng = root.stream("rec/" + std::to_string(m) + "/" + std::to_string(s) + "/" + std::to_string(k));
        const Band band = bands[static_cast<std::size_t>(k)];
        const auto focus = focus_for_class(k);

        std::array<double, kComponents> freq{}, phase{}, mod_freq{}, mod_phase{};
        for (int j = 0; j < kComponents; ++j) {
          freq[j] = std::clamp(rng.uniform(band.lo_hz, band.hi_hz) + shift, band.lo_hz, band.hi_hz);
          phase[j] = rng.uniform(0.0, two_pi);
          mod_freq[j] = rng.uniform(0.05, 0.3);
          mod_phase[j] = rng.uniform(0.0, two_pi);
        }
        std::vector<double> weight(channels), lag(channels);
        for (std::size_t c = 0; c < channels; ++c) {
          const auto& p = montage.coords()[c];
          const double d = p[0] * focus[0] + p[1] * focus[1] + p[2] * focus[2];
          weight[c] = 0.4 + 0.6 * std::max(0.0, d);
          lag[c] = 0.4 * d;
        }
        const double line_phase = rng.uniform(0.0, two_pi);
        Background shared(rng.stream("shared"));
        std::vector<Background> local;
        for (std::size_t c = 0; c < channels; ++c) local.emplace_back(rng.stream(c));

        Recording rec;
        rec.montage = montage;
        rec.fs = static_cast<float>(config.fs);
        rec.label = k;
        rec.subject = "s" + std::to_string(1000 + s).substr(1);
        rec.samples = Array(Shape{channels, length});
        const double amp = config.rhythm_amplitude / std::sqrt(static_cast<double>(kComponents));
        for (std::size_t t = 0; t < length; ++t) {
          const double time = static_cast<double>(t) * dt;
          const double common = shared.next();
          const double line = config.fs > 100.0 ? config.line_noise * std::sin(two_pi * 50.0 * time + line_phase) : 0.0;
          for (std::size_t c = 0; c < channels; ++c) {
            double rhythm = 0.0;
            for (int j = 0; j < kComponents; ++j) {
              const double envelope = 1.0 + 0.3 * std::sin(two_pi * mod_freq[j] * time + mod_phase[j]);
              rhythm += envelope * std::sin(two_pi * freq[j] * time + phase[j] + lag[c]);
            }
            const double noise = kShared * common + local[c].next();
            const double v = gain * (amp * weight[c] * rhythm + noise) + line;
            rec.samples.at({c, t}) = static_cast<Real>(v);
          }
        }
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

}  // namespace lumamba
