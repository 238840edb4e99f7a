#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "lumamba/tape.hpp"

namespace lumamba {

struct GradCheckOptions {
  double step = 1e-3;
  // Coordinates sampled per parameter tensor; tensors smaller than this are checked fully.
  std::size_t samples_per_param = 4;
  std::uint64_t seed = 0;
};

// Builds a scalar on the given tape from the current parameter values.
using ScalarFn = std::function<Var(Tape&)>;

// Evaluates f once (forward only) and returns its value.
double evaluate(const ScalarFn& f);

// Max over sampled coordinates of |analytic - numeric| / (|analytic| + |numeric| + 1e-8),
// with the numeric derivative from central differences.
double grad_check(const ScalarFn& f, std::span<Parameter* const> params, GradCheckOptions options = {});

}  // namespace lumamba
