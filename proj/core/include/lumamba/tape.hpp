#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lumamba/array.hpp"

namespace lumamba {

// A named learnable tensor. The gradient always has the value's shape.
struct Parameter {
  std::string name;
  Array value;
  Array grad;
};

// Owns parameters with stable addresses, in insertion order.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter& add(std::string name, Array init);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& get(std::string_view name);

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  // Parameters whose name starts with `prefix`.
  std::vector<Parameter*> with_prefix(std::string_view prefix);

  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const;
  std::size_t element_count(std::string_view prefix) const;
  void zero_grad();

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

class Tape;

// Handle to a node recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Array& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t rank() const { return shape().size(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Ordered record of primitive applications for one forward/backward pass.
// Confined to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array value);
  // Leaf bound to a parameter; repeated calls for the same parameter share one node.
  Var param(Parameter& p);
  // Records an op result. The backward fn is kept only if a parent needs gradients.
  Var record(Array value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Array value, std::span<const Var> parents, BackwardFn fn);

  const Array& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient accumulator of a node, allocated as zeros on first access.
  Array& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  // Reverse-mode sweep from a scalar root. Node gradients are reset first, so
  // running it twice yields identical results. Bound parameters receive their
  // gradient by assignment.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Array value;
    Array grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // stable addresses: values are referenced while recording
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
};

// Zeroes every parameter in `params`, then back-propagates from `root`;
// parameters not reachable from root keep a zero gradient.
void backward(Tape& tape, Var root, std::span<Parameter* const> params);

}  // namespace lumamba
