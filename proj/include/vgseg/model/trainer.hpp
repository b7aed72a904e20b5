#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vgseg/autodiff/optimizer.hpp"
#include "vgseg/model/cascade.hpp"

namespace vgseg::model {

struct Sample {
  std::string id;
  Volume3D volume;
  SegMask mask;
  std::optional<GraphInput<float>> graph;
};

struct TrainSchedule {
  int epochs = 10;
  double lr = 1e-4;
  int lr_step_epochs = 40;
  double lr_gamma = 0.1;
  double weight_decay = 1e-4;
  double beta = 5.0;
  double lambda = 1.0;  // weight of the P1 loss
  bool freeze_first = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double final_loss = 0.0;
  double p1_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
};

ad::Tensor<float> volume_tensor(const Volume3D& v);
ad::Tensor<float> mask_tensor(const SegMask& m);
ProbabilityMap to_probability(const ad::Tensor<float>& vessel, const Volume3D& like);

// One AdamW step per sample (batch size 1), samples shuffled per epoch from
// the schedule seed. Writes one JSON line per epoch to `log` when given.
// A non-finite loss aborts with DivergenceError.
TrainResult train_cascade(const CascadeModel<float>& model, ParameterStore<float>& params,
                          std::span<const Sample> samples, const TrainSchedule& schedule,
                          std::ostream* log = nullptr);
TrainResult train_unet(const Unet<float>& model, ParameterStore<float>& params, std::span<const Sample> samples,
                       const TrainSchedule& schedule, std::ostream* log = nullptr);

ProbabilityMap predict_cascade(const CascadeModel<float>& model, const Sample& sample);
ProbabilityMap predict_unet(const Unet<float>& model, const Volume3D& volume);

}  // namespace vgseg::model
