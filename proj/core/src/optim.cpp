#include "lumamba/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lumamba {

void AdamW::step(std::span<Parameter* const> params, double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (Parameter* p : params) {
    if (p->grad.shape() != p->value.shape()) throw std::logic_error("AdamW: missing gradient for " + p->name);
    Array& m = m_.try_emplace(p->name, p->value.shape()).first->second;
    Array& v = v_.try_emplace(p->name, p->value.shape()).first->second;
    const double decay = 1.0 - lr * config_.weight_decay;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = static_cast<Real>(config_.beta1 * m[i] + (1.0 - config_.beta1) * g);
      v[i] = static_cast<Real>(config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g);
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
      p->value[i] = static_cast<Real>(p->value[i] * decay - lr * update);
    }
  }
}

double cosine_lr(double base, std::size_t step, std::size_t total_steps, double warmup_fraction) {
  if (total_steps == 0) return base;
  const auto warmup = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(warmup_fraction * total_steps)));
  if (step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total_steps <= warmup) return base;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup));
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * progress));
}

double grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (Real g : p->grad.data()) sq += static_cast<double>(g) * g;
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  const double norm = grad_norm(params);
  if (std::isfinite(norm) && norm > max_norm) {
    const auto s = static_cast<Real>(max_norm / norm);
    for (Parameter* p : params)
      for (Real& g : p->grad.data()) g *= s;
  }
  return norm;
}

}  // namespace lumamba
