#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vgseg/autodiff/tensor.hpp"

namespace vgseg::ad {

// Trainable tensor with a stable name; `grad` accumulates across backward
// calls until zero_grad().
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
};

// Owns parameters in insertion order; names are unique.
template <typename Scalar>
class ParameterStore {
 public:
  Parameter<Scalar>& add(const std::string& name, Tensor<Scalar> value);
  [[nodiscard]] Parameter<Scalar>* find(const std::string& name);
  [[nodiscard]] const Parameter<Scalar>* find(const std::string& name) const;
  Parameter<Scalar>& at(const std::string& name);

  void zero_grad();
  [[nodiscard]] std::size_t size() const { return params_.size(); }
  [[nodiscard]] Eigen::Index numel() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  [[nodiscard]] auto begin() const { return params_.begin(); }
  [[nodiscard]] auto end() const { return params_.end(); }

  template <typename Other>
  [[nodiscard]] ParameterStore<Other> cast() const {
    ParameterStore<Other> out;
    for (const auto& p : params_) out.add(p->name, p->value.template cast<Other>());
    return out;
  }

 private:
  std::vector<std::unique_ptr<Parameter<Scalar>>> params_;
  std::map<std::string, std::size_t> index_;
};

template <typename Scalar>
class Tape;

// Handle to a value recorded on a tape.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  [[nodiscard]] const Tensor<Scalar>& value() const;
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
  [[nodiscard]] const Tensor<Scalar>& grad() const;
  [[nodiscard]] bool requires_grad() const;
  [[nodiscard]] Tape<Scalar>& tape() const { return *tape_; }
  [[nodiscard]] int id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

// Records every op of one forward pass. Nodes are appended in evaluation
// order, so walking them backwards is a reverse topological order.
template <typename Scalar>
class Tape {
 public:
  // Receives the gradient flowing into the node and pushes contributions to
  // its inputs via accumulate().
  using Backward = std::function<void(Tape&, const Tensor<Scalar>& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Tensor<Scalar> value);
  // Differentiable input that is not a Parameter (gradient checks).
  Var<Scalar> input(Tensor<Scalar> value);
  // One leaf per parameter per tape; reused on repeated calls.
  Var<Scalar> param(Parameter<Scalar>& p);

  Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> inputs, Backward backward);
  Var<Scalar> record(Tensor<Scalar> value, const std::vector<Var<Scalar>>& inputs, Backward backward);

  // Seeds d(loss)/d(loss) = 1 and propagates. Parameter gradients are added
  // to Parameter::grad, so repeated calls without zero_grad() accumulate.
  void backward(const Var<Scalar>& loss);

  void accumulate(int id, const Tensor<Scalar>& grad);
  template <typename Fn>
  void accumulate_with(int id, Fn&& fill) {
    auto& n = nodes_[std::size_t(id)];
    if (!n.requires_grad) return;
    ensure_grad(n);
    fill(n.grad);
  }

  [[nodiscard]] const Tensor<Scalar>& value(int id) const { return nodes_[std::size_t(id)].value; }
  // Zeros for nodes the last backward() did not reach.
  [[nodiscard]] const Tensor<Scalar>& grad(int id) {
    ensure_grad(nodes_[std::size_t(id)]);
    return nodes_[std::size_t(id)].grad;
  }
  [[nodiscard]] bool requires_grad(int id) const { return nodes_[std::size_t(id)].requires_grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  // When enabled every recorded value is checked for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    bool has_grad = false;
    Parameter<Scalar>* param = nullptr;
    Backward backward;
  };

  void ensure_grad(Node& n);
  Var<Scalar> push(Node node);

  std::vector<Node> nodes_;
  std::map<const Parameter<Scalar>*, int> param_ids_;
#ifdef NDEBUG
  bool check_finite_ = false;
#else
  bool check_finite_ = true;
#endif
};

}  // namespace vgseg::ad
