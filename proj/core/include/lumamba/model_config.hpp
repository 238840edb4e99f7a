#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace lumamba {

struct ModelConfig {
  std::size_t patch = 64;          // P, samples per patch
  std::size_t embed = 64;          // E
  std::size_t queries = 4;         // Q
  std::size_t conv_channels = 8;   // first temporal conv layer
  std::size_t conv_kernel = 5;
  std::size_t temporal_dim = 16;   // E_t
  std::size_t spectral_dim = 16;   // E_f
  std::size_t positional_dim = 16; // E_p
  std::size_t positional_hidden = 32;
  std::size_t ffn_hidden = 128;
  std::size_t state = 16;          // N
  std::size_t expand = 2;
  std::size_t blocks = 2;
  std::size_t classes = 2;         // K

  std::size_t latent_dim() const { return queries * embed; }
  std::size_t spectral_bins() const { return patch / 2 + 1; }
  // Throws std::invalid_argument on non-positive or inconsistent dimensions.
  void validate() const;
  // key=value lines, one per field, in declaration order.
  std::string describe() const;
  // Assigns one field by its describe() name; returns false for unknown keys.
  bool set(std::string_view key, std::string_view value);
};

// Width of the low-rank step-size projection for an SSM of input width d.
inline std::size_t dt_rank(std::size_t d) { return (d + 15) / 16; }

}  // namespace lumamba
