#include "vgseg/autodiff/tape.hpp"

namespace vgseg::ad {

template <typename Scalar>
Parameter<Scalar>& ParameterStore<Scalar>::add(const std::string& name, Tensor<Scalar> value) {
  if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter<Scalar>>();
  p->name = name;
  p->grad = Tensor<Scalar>(value.shape());
  p->value = std::move(value);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

template <typename Scalar>
Parameter<Scalar>* ParameterStore<Scalar>::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

template <typename Scalar>
const Parameter<Scalar>* ParameterStore<Scalar>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

template <typename Scalar>
Parameter<Scalar>& ParameterStore<Scalar>::at(const std::string& name) {
  auto* p = find(name);
  if (!p) throw ContractError("unknown parameter '" + name + "'");
  return *p;
}

template <typename Scalar>
void ParameterStore<Scalar>::zero_grad() {
  for (auto& p : params_) p->grad.data().setZero();
}

template <typename Scalar>
Eigen::Index ParameterStore<Scalar>::numel() const {
  Eigen::Index n = 0;
  for (const auto& p : params_) n += p->value.numel();
  return n;
}

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::value() const {
  return tape_->value(id_);
}

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::grad() const {
  return tape_->grad(id_);
}

template <typename Scalar>
bool Var<Scalar>::requires_grad() const {
  return tape_->requires_grad(id_);
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::push(Node node) {
  if (check_finite_ && !node.value.all_finite()) {
    throw DataError("non-finite value produced at tape node " + std::to_string(nodes_.size()) +
                    " (shape " + to_string(node.value.shape()) + ")");
  }
  nodes_.push_back(std::move(node));
  return Var<Scalar>(this, int(nodes_.size()) - 1);
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::constant(Tensor<Scalar> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::input(Tensor<Scalar> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::param(Parameter<Scalar>& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var<Scalar>(this, it->second);
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  auto v = push(std::move(n));
  param_ids_[&p] = v.id();
  return v;
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> inputs,
                                 Backward backward) {
  return record(std::move(value), std::vector<Var<Scalar>>(inputs), std::move(backward));
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(Tensor<Scalar> value, const std::vector<Var<Scalar>>& inputs,
                                 Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw ContractError("op mixes variables from different tapes");
    n.requires_grad = n.requires_grad || requires_grad(in.id());
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename Scalar>
void Tape<Scalar>::ensure_grad(Node& n) {
  if (!n.has_grad) {
    if (n.grad.shape() == n.value.shape() && n.grad.numel() == n.value.numel()) {
      n.grad.data().setZero();
    } else {
      n.grad = Tensor<Scalar>(n.value.shape());
    }
    n.has_grad = true;
  }
}

template <typename Scalar>
void Tape<Scalar>::accumulate(int id, const Tensor<Scalar>& grad) {
  auto& n = nodes_[std::size_t(id)];
  if (!n.requires_grad) return;
  require_same_shape(n.value.shape(), grad.shape(), "gradient accumulation");
  ensure_grad(n);
  n.grad.data() += grad.data();
}

template <typename Scalar>
void Tape<Scalar>::backward(const Var<Scalar>& loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss recorded on another tape");
  if (loss.value().numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  // Node gradients are per call; only Parameter::grad accumulates.
  for (auto& n : nodes_) n.has_grad = false;
  auto& root = nodes_[std::size_t(loss.id())];
  if (!root.requires_grad) return;
  ensure_grad(root);
  root.grad.data().setConstant(Scalar(1));
  for (int id = loss.id(); id >= 0; --id) {
    auto& n = nodes_[std::size_t(id)];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) n.param->grad.data() += n.grad.data();
  }
}

template struct Parameter<float>;
template struct Parameter<double>;
template class ParameterStore<float>;
template class ParameterStore<double>;
template class Var<float>;
template class Var<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace vgseg::ad
