#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lumamba/array.hpp"

namespace lumamba {

using Coord = std::array<float, 3>;

// Named electrodes with unit-sphere positions, in channel order.
class Montage {
 public:
  static constexpr std::size_t kMaxChannels = 64;

  Montage() = default;
  Montage(std::vector<std::string> names, std::vector<Coord> coords);

  std::size_t channels() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Coord>& coords() const { return coords_; }
  // C x 3
  Array coord_array() const;
  // Channel i of the result is channel perm[i] of this montage.
  Montage permuted(std::span<const std::size_t> perm) const;
  // Channels picks[0], picks[1], ... of this montage.
  Montage select(std::span<const std::size_t> picks) const;

  friend bool operator==(const Montage&, const Montage&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Coord> coords_;
};

// 10-20 system templates with 16, 20 or 26 channels.
Montage montage_template(int channels);
std::vector<int> montage_template_sizes();

}  // namespace lumamba
