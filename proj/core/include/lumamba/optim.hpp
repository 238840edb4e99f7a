#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>

#include "lumamba/array.hpp"
#include "lumamba/tape.hpp"

namespace lumamba {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adaptive moments with decoupled weight decay. Moments are keyed by parameter name.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(std::span<Parameter* const> params, double lr);

  const AdamWConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t n) { steps_ = n; }
  std::map<std::string, Array>& first_moments() { return m_; }
  std::map<std::string, Array>& second_moments() { return v_; }
  const std::map<std::string, Array>& first_moments() const { return m_; }
  const std::map<std::string, Array>& second_moments() const { return v_; }

 private:
  AdamWConfig config_;
  std::size_t steps_ = 0;
  std::map<std::string, Array> m_, v_;
};

// Linear warmup over the first warmup_fraction of steps, then cosine decay to zero.
double cosine_lr(double base, std::size_t step, std::size_t total_steps, double warmup_fraction = 0.05);

// Global L2 norm of all gradients.
double grad_norm(std::span<Parameter* const> params);
// Rescales gradients so the global norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

}  // namespace lumamba
