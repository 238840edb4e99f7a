#include "lumamba/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "lumamba/rng.hpp"

namespace lumamba {

double evaluate(const ScalarFn& f) {
  Tape tape;
  Var y = f(tape);
  if (y.value().size() != 1) throw std::invalid_argument("grad_check: function is not scalar");
  const double v = y.value()[0];
  if (!std::isfinite(v)) throw std::domain_error("grad_check: function value is not finite");
  return v;
}

double grad_check(const ScalarFn& f, std::span<Parameter* const> params, GradCheckOptions options) {
  std::vector<Array> analytic;
  {
    Tape tape;
    Var y = f(tape);
    if (!std::isfinite(static_cast<double>(y.value()[0]))) {
      throw std::domain_error("grad_check: function value is not finite");
    }
    backward(tape, y, params);
    for (auto* p : params) analytic.push_back(p->grad);
  }

  Rng rng(options.seed, "grad_check");
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    const std::size_t n = p.value.size();
    std::vector<std::size_t> coords;
    if (n <= options.samples_per_param) {
      coords.resize(n);
      std::iota(coords.begin(), coords.end(), std::size_t{0});
    } else {
      for (std::size_t s = 0; s < options.samples_per_param; ++s) coords.push_back(rng.below(n));
    }
    for (std::size_t c : coords) {
      const Real saved = p.value[c];
      p.value[c] = static_cast<Real>(saved + options.step);
      const double hi = evaluate(f);
      const double up = static_cast<double>(p.value[c]) - saved;
      p.value[c] = static_cast<Real>(saved - options.step);
      const double lo = evaluate(f);
      const double down = saved - static_cast<double>(p.value[c]);
      p.value[c] = saved;
      // Use the step actually representable in Real.
      const double numeric = (hi - lo) / (up + down);
      const double a = analytic[pi][c];
      const double err = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-8);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace lumamba
