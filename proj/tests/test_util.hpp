#pragma once

#include <numeric>
#include <vector>

#include "lumamba/array.hpp"
#include "lumamba/model_config.hpp"
#include "lumamba/montage.hpp"
#include "lumamba/rng.hpp"

namespace lumamba::testing {

inline Array random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Array a(std::move(shape));
  for (Real& v : a.data()) v = static_cast<Real>(rng.uniform(lo, hi));
  return a;
}

inline Array normal_array(Shape shape, Rng& rng, double stddev = 1.0) {
  Array a(std::move(shape));
  for (Real& v : a.data()) v = static_cast<Real>(stddev * rng.normal());
  return a;
}

// First `channels` electrodes of the 26-channel template.
inline Montage first_channels(std::size_t channels) {
  std::vector<std::size_t> picks(channels);
  std::iota(picks.begin(), picks.end(), 0);
  return montage_template(26).select(picks);
}

// Small dimensions for finite-difference checks.
inline ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.patch = 16;
  cfg.embed = 8;
  cfg.queries = 2;
  cfg.conv_channels = 2;
  cfg.temporal_dim = 4;
  cfg.spectral_dim = 4;
  cfg.positional_dim = 4;
  cfg.positional_hidden = 8;
  cfg.ffn_hidden = 16;
  cfg.state = 4;
  return cfg;
}

// Channel i of the result is channel perm[i] of x (B, C, T).
inline Array permute_channels(const Array& x, const std::vector<std::size_t>& perm) {
  Array out(x.shape());
  const std::size_t b = x.dim(0), c = x.dim(1), t = x.dim(2);
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t ti = 0; ti < t; ++ti) out.at({bi, ci, ti}) = x.at({bi, perm[ci], ti});
  return out;
}

inline std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

inline double max_abs_diff(const Array& a, const Array& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

}  // namespace lumamba::testing
