#pragma once

#include <cstdint>
#include <string_view>

namespace lumamba {

std::uint64_t hash_name(std::string_view name);

// Counter-based generator: draw i is a pure function of (key, i), so named
// sub-streams are reproducible regardless of call interleaving elsewhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t counter = 0) : key_(seed), counter_(counter) {}
  Rng(std::uint64_t seed, std::string_view stream, std::uint64_t counter = 0);

  // Independent stream derived from this key and a name.
  Rng stream(std::string_view name) const;
  Rng stream(std::uint64_t index) const;

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace lumamba
