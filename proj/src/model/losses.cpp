#include "vgseg/model/losses.hpp"

namespace vgseg::model {

namespace {

template <typename S>
void require_binary(const ad::Var<S>& p, const ad::Tensor<S>& y, const char* op) {
  ad::require_same_shape(p.shape(), y.shape(), op);
  if (((y.data() != S(0)) && (y.data() != S(1))).any()) {
    throw ContractError(std::string(op) + ": target must be binary");
  }
}

}  // namespace

template <typename S>
ad::Var<S> weighted_bce(const ad::Var<S>& p, const ad::Tensor<S>& y, double beta) {
  require_binary(p, y, "weighted_bce");
  auto& tape = p.tape();
  const S eps = S(kProbabilityEpsilon);
  auto pc = ad::clamp(p, eps, S(1) - eps);
  ad::Tensor<S> pos(y.shape()), neg(y.shape());
  pos.data() = y.data() * S(-beta);
  neg.data() = y.data() - S(1);
  auto terms = tape.constant(pos) * ad::log(pc) + tape.constant(neg) * ad::log(S(1) - pc);
  return ad::reduce_mean(terms);
}

template <typename S>
ad::Var<S> weighted_bce_logits(const ad::Var<S>& z, const ad::Tensor<S>& y, double beta) {
  require_binary(z, y, "weighted_bce_logits");
  auto& tape = z.tape();
  ad::Tensor<S> pos(y.shape()), neg(y.shape());
  pos.data() = y.data() * S(beta);
  neg.data() = S(1) - y.data();
  auto terms = tape.constant(pos) * ad::softplus(S(-1) * z) + tape.constant(neg) * ad::softplus(z);
  return ad::reduce_mean(terms);
}

template <typename S>
ad::Var<S> dice_loss(const ad::Var<S>& p, const ad::Tensor<S>& y) {
  require_binary(p, y, "dice_loss");
  auto& tape = p.tape();
  const S eps = S(kDiceSmooth);
  auto yv = tape.constant(y);
  auto num = ad::reduce_sum(yv * p) * S(2) + eps;
  auto den = ad::reduce_sum(p) + (S(y.data().sum()) + eps);
  return S(1) - num / den;
}

template <typename S>
ad::Var<S> segmentation_loss(const ad::Var<S>& p, const ad::Tensor<S>& y, double beta) {
  return weighted_bce(p, y, beta) + dice_loss(p, y);
}

template <typename S>
ad::Var<S> segmentation_loss(const ad::Var<S>& z, const ad::Var<S>& p, const ad::Tensor<S>& y, double beta) {
  return weighted_bce_logits(z, y, beta) + dice_loss(p, y);
}

template ad::Var<float> weighted_bce_logits(const ad::Var<float>&, const ad::Tensor<float>&, double);
template ad::Var<double> weighted_bce_logits(const ad::Var<double>&, const ad::Tensor<double>&, double);
template ad::Var<float> segmentation_loss(const ad::Var<float>&, const ad::Var<float>&, const ad::Tensor<float>&,
                                          double);
template ad::Var<double> segmentation_loss(const ad::Var<double>&, const ad::Var<double>&,
                                           const ad::Tensor<double>&, double);
template ad::Var<float> weighted_bce(const ad::Var<float>&, const ad::Tensor<float>&, double);
template ad::Var<double> weighted_bce(const ad::Var<double>&, const ad::Tensor<double>&, double);
template ad::Var<float> dice_loss(const ad::Var<float>&, const ad::Tensor<float>&);
template ad::Var<double> dice_loss(const ad::Var<double>&, const ad::Tensor<double>&);
template ad::Var<float> segmentation_loss(const ad::Var<float>&, const ad::Tensor<float>&, double);
template ad::Var<double> segmentation_loss(const ad::Var<double>&, const ad::Tensor<double>&, double);

}  // namespace vgseg::model
