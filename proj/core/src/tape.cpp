#include "lumamba/tape.hpp"

#include <stdexcept>

namespace lumamba {

Parameter& ParamStore::add(std::string name, Array init) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_.emplace(name, params_.size());
  Array grad = Array::zeros(init.shape());
  params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad)});
  return params_.back();
}

Parameter* ParamStore::find(std::string_view name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParamStore::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter& ParamStore::get(std::string_view name) {
  auto* p = find(name);
  if (!p) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *p;
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParamStore::with_prefix(std::string_view prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p.name.starts_with(prefix)) out.push_back(&p);
  }
  return out;
}

std::size_t ParamStore::element_count() const { return element_count(""); }

std::size_t ParamStore::element_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.name.starts_with(prefix)) n += p.value.size();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(Real(0));
}

const Array& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Array value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Array value, std::initializer_list<Var> parents, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(fn));
}

Var Tape::record(Array value, std::span<const Var> parents, BackwardFn fn) {
  bool needs = false;
  for (const auto& p : parents) {
    if (&p.tape() != this) throw std::invalid_argument("Tape::record: parent from another tape");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  Node node{std::move(value), {}, {}, nullptr, needs};
  if (needs) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Array& Tape::grad(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty()) node.grad = Array::zeros(node.value.shape());
  return node.grad;
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
  if (root.value().size() != 1) {
    throw std::invalid_argument("backward: root must be a scalar, got shape " +
                                shape_string(root.shape()));
  }
  for (auto& node : nodes_) node.grad = Array();
  if (nodes_[root.id()].requires_grad) {
    grad(root.id())[0] = Real(1);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (node.grad.empty()) continue;
      if (node.backward) node.backward(*this, i);
    }
  }
  for (auto& node : nodes_) {
    if (!node.param) continue;
    node.param->grad = node.grad.empty() ? Array::zeros(node.value.shape()) : node.grad;
  }
}

void backward(Tape& tape, Var root, std::span<Parameter* const> params) {
  for (auto* p : params) p->grad = Array::zeros(p->value.shape());
  tape.backward(root);
}

}  // namespace lumamba
