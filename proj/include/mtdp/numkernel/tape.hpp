#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mtdp/numkernel/tensor.hpp"

namespace mtdp::nk {

/// Trainable tensor plus its AdamW state (ParamState).
template <typename Real>
struct Parameter {
  Parameter(std::string name_, Tensor<Real> init)
      : name(std::move(name_)),
        value(std::move(init)),
        grad(value.shape()),
        adam_m(value.shape()),
        adam_v(value.shape()) {}

  void zero_grad() { grad.fill(Real(0)); }

  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  Tensor<Real> adam_m;
  Tensor<Real> adam_v;
  std::uint64_t step_count = 0;
  // Frozen parameters are read by the tape but never receive gradient.
  bool trainable = true;
};

/// Ordered, named collection of parameters. Pointers handed out stay valid
/// for the lifetime of the set.
template <typename Real>
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(const ParamSet&) = delete;
  ParamSet& operator=(const ParamSet&) = delete;
  ParamSet(ParamSet&&) noexcept = default;
  ParamSet& operator=(ParamSet&&) noexcept = default;

  Parameter<Real>& add(std::string name, Tensor<Real> init) {
    if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
    params_.push_back(std::make_unique<Parameter<Real>>(std::move(name), std::move(init)));
    return *params_.back();
  }

  Parameter<Real>* find(std::string_view name) const {
    for (const auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  Parameter<Real>& at(std::string_view name) const {
    auto* p = find(name);
    if (p == nullptr) throw ConfigError("unknown parameter '" + std::string(name) + "'");
    return *p;
  }

  std::vector<Parameter<Real>*> all() const {
    std::vector<Parameter<Real>*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

  std::size_t size() const noexcept { return params_.size(); }

  std::size_t value_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void set_trainable(bool on) {
    for (auto& p : params_) p->trainable = on;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter<Real>>> params_;
};

template <typename Real>
class Tape;

/// Handle to a node recorded on a Tape.
template <typename Real>
class Var {
 public:
  Var() = default;
  Var(Tape<Real>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Real>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<Real>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<Real>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape. Every op appends a node holding its
/// output and a closure that pushes the output gradient to its parents.
template <typename Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void set_grad_enabled(bool on) noexcept { grad_enabled_ = on; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var<Real> constant(Tensor<Real> v) {
    nodes_.push_back(Node{std::move(v), nullptr, {}, {}, false, false});
    return {this, nodes_.size() - 1};
  }

  // Differentiable input whose gradient is kept on the tape.
  Var<Real> leaf(Tensor<Real> v) {
    nodes_.push_back(Node{std::move(v), nullptr, {}, {}, grad_enabled_, false});
    return {this, nodes_.size() - 1};
  }

  // Parameter leaf: the value is referenced, the gradient accumulates into
  // the parameter's grad tensor. Frozen parameters enter as constants.
  Var<Real> param(Parameter<Real>& p) {
    nodes_.push_back(Node{{}, &p, {}, {}, grad_enabled_ && p.trainable, false});
    return {this, nodes_.size() - 1};
  }

  Var<Real> record(Tensor<Real> v, const std::vector<Var<Real>>& parents, BackwardFn fn) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto& p : parents) needs = needs || nodes_[p.id()].needs_grad;
    }
    nodes_.push_back(Node{std::move(v), nullptr, {}, needs ? std::move(fn) : BackwardFn{}, needs, false});
    return {this, nodes_.size() - 1};
  }

  const Tensor<Real>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param ? n.param->value : n.value;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(const Var<Real>& v) const { return nodes_[v.id()].needs_grad; }

  // Gradient flowing into node `id` (valid inside its backward closure).
  const Tensor<Real>& grad(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param ? n.param->grad : n.grad;
  }

  const Tensor<Real>& grad(const Var<Real>& v) const { return grad(v.id()); }

  // Accumulator for parent gradients, zero-initialized on first touch.
  Tensor<Real>& grad_acc(std::size_t id) {
    Node& n = nodes_[id];
    n.has_grad = true;
    if (n.param) {
      if (n.param->grad.shape() != n.param->value.shape()) n.param->grad = Tensor<Real>(n.param->value.shape());
      return n.param->grad;
    }
    if (n.grad.shape() != n.value.shape() || n.grad.empty()) n.grad = Tensor<Real>(n.value.shape());
    return n.grad;
  }

  void backward(const Var<Real>& loss) {
    const std::size_t root = loss.id();
    if (value(root).size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + to_string(value(root).shape()));
    }
    if (!nodes_[root].needs_grad) return;
    grad_acc(root)[0] += Real(1);
    for (std::size_t i = root + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.has_grad && n.backward) n.backward(*this, i);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    Parameter<Real>* param;
    Tensor<Real> grad;
    BackwardFn backward;
    bool needs_grad;
    bool has_grad;
  };

  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

}  // namespace mtdp::nk
