#pragma once

#include <vector>

#include "vgseg/autodiff/tape.hpp"

namespace vgseg::ad {

// lr(epoch) = base * gamma^(epoch / step_epochs)
struct StepSchedule {
  double base_lr = 1e-4;
  int step_epochs = 40;
  double gamma = 0.1;

  [[nodiscard]] double lr_at(int epoch) const;
};

struct AdamWParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Adam with decoupled weight decay. Moment buffers follow the store's
// parameter order.
class AdamW {
 public:
  AdamW(ParameterStore<float>& params, AdamWParams hp = {});

  void step(double lr);
  [[nodiscard]] long steps() const { return t_; }

 private:
  ParameterStore<float>* params_;
  AdamWParams hp_;
  long t_ = 0;
  std::vector<Eigen::ArrayXd> m_, v_;
};

}  // namespace vgseg::ad
