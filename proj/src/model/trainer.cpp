#include "vgseg/model/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#if defined(__SSE2__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

#include "vgseg/model/losses.hpp"

namespace vgseg::model {

void TrainSchedule::validate() const {
  if (epochs < 1) throw ConfigError("schedule.epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("schedule.lr must be positive");
  if (lr_step_epochs < 1) throw ConfigError("schedule.lr_step_epochs must be >= 1");
  if (!(lr_gamma > 0.0 && lr_gamma <= 1.0)) throw ConfigError("schedule.lr_gamma must be in (0, 1]");
  if (weight_decay < 0.0) throw ConfigError("schedule.weight_decay must be >= 0");
  if (!(beta > 0.0)) throw ConfigError("schedule.beta must be positive");
  if (lambda < 0.0) throw ConfigError("schedule.lambda must be >= 0");
}

ad::Tensor<float> volume_tensor(const Volume3D& v) {
  const Dims d = v.dims();
  return ad::Tensor<float>(ad::Shape{1, d.d, d.h, d.w}, v.data());
}

ad::Tensor<float> mask_tensor(const SegMask& m) {
  const Dims d = m.dims();
  return ad::Tensor<float>(ad::Shape{1, d.d, d.h, d.w}, m.data().cast<float>());
}

ProbabilityMap to_probability(const ad::Tensor<float>& vessel, const Volume3D& like) {
  ProbabilityMap p(like.dims(), like.spacing());
  if (vessel.numel() != Eigen::Index(p.size())) throw ContractError("prediction size does not match volume");
  p.data() = vessel.data();
  clamp_probabilities(p);
  return p;
}

namespace {

struct StepLoss {
  double total, final_part, p1_part;
};

// Denormals show up in Adam moments and dead activations and can slow a
// step down several times. Scoped to the calling thread.
class FlushDenormals {
 public:
#if defined(__SSE2__)
  FlushDenormals() : saved_(_mm_getcsr()) {
    _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
    _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
  }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

template <typename Forward>
TrainResult run_training(ParameterStore<float>& params, std::span<const Sample> samples,
                         const TrainSchedule& schedule, std::ostream* log, Forward&& forward) {
  schedule.validate();
  if (samples.empty()) throw ParameterError("training set is empty");
  const FlushDenormals ftz;
  ad::AdamW opt(params, ad::AdamWParams{.weight_decay = schedule.weight_decay});
  const ad::StepSchedule lr{schedule.lr, schedule.lr_step_epochs, schedule.lr_gamma};
  std::mt19937_64 rng(schedule.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr.lr_at(epoch);
    for (std::size_t idx : order) {
      const Sample& s = samples[idx];
      params.zero_grad();
      ad::Tape<float> tape;
      const StepLoss sl = forward(tape, s);
      if (!std::isfinite(sl.total)) {
        throw DivergenceError("loss became " + std::to_string(sl.total) + " at epoch " + std::to_string(epoch) +
                              ", sample " + s.id);
      }
      opt.step(rec.lr);
      result.step_losses.push_back(sl.total);
      rec.loss += sl.total;
      rec.final_loss += sl.final_part;
      rec.p1_loss += sl.p1_part;
    }
    const double n = double(samples.size());
    rec.loss /= n;
    rec.final_loss /= n;
    rec.p1_loss /= n;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(rec);
    if (log) {
      nlohmann::json j{{"epoch", rec.epoch},       {"loss", rec.loss}, {"final_loss", rec.final_loss},
                       {"p1_loss", rec.p1_loss},   {"lr", rec.lr},     {"wall_s", rec.seconds}};
      *log << j.dump() << '\n' << std::flush;
    }
  }
  return result;
}

}  // namespace

TrainResult train_cascade(const CascadeModel<float>& model, ParameterStore<float>& params,
                          std::span<const Sample> samples, const TrainSchedule& schedule, std::ostream* log) {
  return run_training(params, samples, schedule, log, [&](ad::Tape<float>& tape, const Sample& s) {
    auto x = tape.constant(volume_tensor(s.volume));
    const auto y = mask_tensor(s.mask);
    auto out = model.forward(tape, x, s.graph ? &*s.graph : nullptr, schedule.freeze_first);
    auto lf = segmentation_loss(out.second.margin, out.final, y, schedule.beta);
    auto lp = segmentation_loss(out.first.margin, out.p1, y, schedule.beta);
    auto total = schedule.lambda > 0.0 ? lf + lp * float(schedule.lambda) : lf;
    const StepLoss sl{total.value()[0], lf.value()[0], lp.value()[0]};
    if (std::isfinite(sl.total)) tape.backward(total);
    return sl;
  });
}

TrainResult train_unet(const Unet<float>& model, ParameterStore<float>& params, std::span<const Sample> samples,
                       const TrainSchedule& schedule, std::ostream* log) {
  return run_training(params, samples, schedule, log, [&](ad::Tape<float>& tape, const Sample& s) {
    auto out = model.forward(tape, tape.constant(volume_tensor(s.volume)));
    auto loss = segmentation_loss(out.margin, out.vessel, mask_tensor(s.mask), schedule.beta);
    const StepLoss sl{loss.value()[0], loss.value()[0], 0.0};
    if (std::isfinite(sl.total)) tape.backward(loss);
    return sl;
  });
}

ProbabilityMap predict_cascade(const CascadeModel<float>& model, const Sample& sample) {
  const FlushDenormals ftz;
  ad::Tape<float> tape;
  auto out = model.forward(tape, tape.constant(volume_tensor(sample.volume)), sample.graph ? &*sample.graph : nullptr);
  return to_probability(out.final.value(), sample.volume);
}

ProbabilityMap predict_unet(const Unet<float>& model, const Volume3D& volume) {
  const FlushDenormals ftz;
  ad::Tape<float> tape;
  auto out = model.forward(tape, tape.constant(volume_tensor(volume)));
  return to_probability(out.vessel.value(), volume);
}

}  // namespace vgseg::model
