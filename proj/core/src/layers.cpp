#include "lumamba/layers.hpp"

#include <cmath>

#include "lumamba/ops.hpp"

namespace lumamba {

Parameter& add_uniform(ParamStore& store, const std::string& name, Shape shape, double bound, const Rng& init) {
  Rng rng = init.stream(name);
  Array a(std::move(shape));
  for (Real& v : a.data()) v = static_cast<Real>(rng.uniform(-bound, bound));
  return store.add(name, std::move(a));
}

Parameter& add_normal(ParamStore& store, const std::string& name, Shape shape, double stddev, const Rng& init) {
  Rng rng = init.stream(name);
  Array a(std::move(shape));
  for (Real& v : a.data()) v = static_cast<Real>(stddev * rng.normal());
  return store.add(name, std::move(a));
}

Parameter& add_constant(ParamStore& store, const std::string& name, Shape shape, Real value) {
  return store.add(name, Array(std::move(shape), value));
}

void add_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, const Rng& init,
                bool bias) {
  add_uniform(store, name + ".w", Shape{in, out}, 1.0 / std::sqrt(static_cast<double>(in)), init);
  if (bias) add_constant(store, name + ".b", Shape{out}, 0);
}

void add_layer_norm(ParamStore& store, const std::string& name, std::size_t dim) {
  add_constant(store, name + ".g", Shape{dim}, 1);
  add_constant(store, name + ".b", Shape{dim}, 0);
}

Var apply_linear(Tape& tape, ParamStore& store, const std::string& name, Var x) {
  Var w = tape.param(store.get(name + ".w"));
  if (Parameter* b = store.find(name + ".b")) return linear(x, w, tape.param(*b));
  return linear(x, w);
}

Var apply_layer_norm(Tape& tape, ParamStore& store, const std::string& name, Var x) {
  return layer_norm(x, tape.param(store.get(name + ".g")), tape.param(store.get(name + ".b")));
}

}  // namespace lumamba
