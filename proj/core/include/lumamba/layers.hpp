#pragma once

#include <cstddef>
#include <string>

#include "lumamba/rng.hpp"
#include "lumamba/tape.hpp"

namespace lumamba {

// Parameter factories. Every tensor draws from its own named stream of `init`,
// so initial values do not depend on registration order.
Parameter& add_uniform(ParamStore& store, const std::string& name, Shape shape, double bound, const Rng& init);
Parameter& add_normal(ParamStore& store, const std::string& name, Shape shape, double stddev, const Rng& init);
Parameter& add_constant(ParamStore& store, const std::string& name, Shape shape, Real value);

// name.w (in x out), uniform in +-1/sqrt(in); name.b zero-initialized when `bias`.
void add_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, const Rng& init,
                bool bias = true);
// name.g ones, name.b zeros.
void add_layer_norm(ParamStore& store, const std::string& name, std::size_t dim);

// Applies name.w and name.b (if registered).
Var apply_linear(Tape& tape, ParamStore& store, const std::string& name, Var x);
Var apply_layer_norm(Tape& tape, ParamStore& store, const std::string& name, Var x);

}  // namespace lumamba
