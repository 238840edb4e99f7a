#include "lumamba/montage.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

namespace lumamba {
namespace {

struct Site {
  const char* name;
  double polar;    // degrees from the vertex (Cz)
  double azimuth;  // degrees from the nose, positive toward the right ear
};

// Idealized spherical 10-20 positions. x: right, y: nose, z: vertex.
constexpr Site kSites[] = {
    {"Fp1", 90, -18},  {"Fp2", 90, 18},   {"F7", 90, -54},   {"F8", 90, 54},   {"T3", 90, -90},
    {"T4", 90, 90},    {"T5", 90, -126},  {"T6", 90, 126},   {"O1", 90, -162}, {"O2", 90, 162},
    {"Oz", 90, 180},   {"Fz", 45, 0},     {"Cz", 0, 0},      {"Pz", 45, 180},  {"C3", 45, -90},
    {"C4", 45, 90},    {"F3", 60, -40},   {"F4", 60, 40},    {"P3", 60, -140}, {"P4", 60, 140},
    {"FC1", 32, -45},  {"FC2", 32, 45},   {"CP1", 32, -135}, {"CP2", 32, 135}, {"FC5", 70, -68},
    {"FC6", 70, 68},
};

Coord site_coord(const Site& s) {
  const double th = s.polar * std::numbers::pi / 180.0;
  const double ph = s.azimuth * std::numbers::pi / 180.0;
  double x = std::sin(th) * std::sin(ph);
  double y = std::sin(th) * std::cos(ph);
  double z = std::cos(th);
  const double n = std::sqrt(x * x + y * y + z * z);
  return {static_cast<float>(x / n), static_cast<float>(y / n), static_cast<float>(z / n)};
}

Coord lookup(const std::string& name) {
  for (const auto& s : kSites) {
    if (name == s.name) return site_coord(s);
  }
  throw std::logic_error("no position for electrode " + name);
}

const std::vector<std::string> k16 = {"Fp1", "Fp2", "F7", "F3", "F4", "F8", "T3", "C3",
                                      "C4",  "T4",  "T5", "P3", "P4", "T6", "O1", "O2"};
const std::vector<std::string> k20 = {"Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz",
                                      "C4",  "T4",  "T5", "P3", "Pz", "P4", "T6", "O1", "O2", "Oz"};
const std::vector<std::string> k26 = {"Fp1", "Fp2", "F7",  "F3",  "Fz",  "F4",  "F8",  "FC5", "FC1",
                                      "FC2", "FC6", "T3",  "C3",  "Cz",  "C4",  "T4",  "CP1", "CP2",
                                      "T5",  "P3",  "Pz",  "P4",  "T6",  "O1",  "O2",  "Oz"};

}  // namespace

Montage::Montage(std::vector<std::string> names, std::vector<Coord> coords)
    : names_(std::move(names)), coords_(std::move(coords)) {
  if (names_.empty() || names_.size() > kMaxChannels) {
    throw std::invalid_argument("Montage: channel count must be in [1, 64], got " + std::to_string(names_.size()));
  }
  if (names_.size() != coords_.size()) throw std::invalid_argument("Montage: names and coords differ in length");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (!seen.insert(n).second) throw std::invalid_argument("Montage: duplicate channel name " + n);
  }
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    const auto& c = coords_[i];
    const double norm = std::sqrt(double(c[0]) * c[0] + double(c[1]) * c[1] + double(c[2]) * c[2]);
    if (std::abs(norm - 1.0) > 1e-6) {
      throw std::invalid_argument("Montage: coordinate of " + names_[i] + " is not unit norm");
    }
  }
}

Array Montage::coord_array() const {
  Array out(Shape{channels(), 3});
  for (std::size_t c = 0; c < channels(); ++c) {
    for (std::size_t k = 0; k < 3; ++k) out.at({c, k}) = static_cast<Real>(coords_[c][k]);
  }
  return out;
}

Montage Montage::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != channels()) throw std::invalid_argument("Montage::permuted: size mismatch");
  return select(perm);
}

Montage Montage::select(std::span<const std::size_t> picks) const {
  std::vector<std::string> names;
  std::vector<Coord> coords;
  for (auto p : picks) {
    names.push_back(names_.at(p));
    coords.push_back(coords_.at(p));
  }
  return Montage(std::move(names), std::move(coords));
}

Montage montage_template(int channels) {
  const std::vector<std::string>* names = nullptr;
  switch (channels) {
    case 16: names = &k16; break;
    case 20: names = &k20; break;
    case 26: names = &k26; break;
    default: throw std::invalid_argument("unknown montage template: " + std::to_string(channels) + " channels");
  }
  std::vector<Coord> coords;
  for (const auto& n : *names) coords.push_back(lookup(n));
  return Montage(*names, std::move(coords));
}

std::vector<int> montage_template_sizes() { return {16, 20, 26}; }

}  // namespace lumamba
