#include "vgseg/autodiff/optimizer.hpp"

#include <cmath>

namespace vgseg::ad {

double StepSchedule::lr_at(int epoch) const {
  if (step_epochs <= 0) return base_lr;
  return base_lr * std::pow(gamma, epoch / step_epochs);
}

AdamW::AdamW(ParameterStore<float>& params, AdamWParams hp) : params_(&params), hp_(hp) {
  for (const auto& p : params) {
    m_.push_back(Eigen::ArrayXd::Zero(p->value.numel()));
    v_.push_back(Eigen::ArrayXd::Zero(p->value.numel()));
  }
}

void AdamW::step(double lr) {
  if (m_.size() != params_->size()) throw ContractError("AdamW: parameter store changed after construction");
  ++t_;
  const double bc1 = 1.0 - std::pow(hp_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(hp_.beta2, double(t_));
  std::size_t k = 0;
  for (auto& p : *params_) {
    const Eigen::ArrayXd g = p->grad.data().cast<double>();
    auto& m = m_[k];
    auto& v = v_[k];
    m = hp_.beta1 * m + (1.0 - hp_.beta1) * g;
    v = hp_.beta2 * v + (1.0 - hp_.beta2) * g.square();
    Eigen::ArrayXd w = p->value.data().cast<double>();
    w *= 1.0 - lr * hp_.weight_decay;
    w -= lr * (m / bc1) / ((v / bc2).sqrt() + hp_.eps);
    p->value.data() = w.cast<float>();
    ++k;
  }
}

}  // namespace vgseg::ad
