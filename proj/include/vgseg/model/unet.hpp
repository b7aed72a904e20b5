#pragma once

#include <vector>

#include "vgseg/model/layers.hpp"

namespace vgseg::model {

// Lets a caller replace the encoder feature E_l^c and decoder feature D_l^c
// of each level before they are consumed downstream.
template <typename S>
class FusionHooks {
 public:
  virtual ~FusionHooks() = default;
  virtual Var<S> encoder(int level, const Var<S>& e_c) = 0;
  virtual Var<S> decoder(int level, const Var<S>& d_c) = 0;
};

template <typename S>
struct UnetOutput {
  std::vector<Var<S>> encoder;  // E_l after hooks, level 0 = full resolution
  std::vector<Var<S>> decoder;  // D_l after hooks
  Var<S> probs;                 // {2, D, H, W}, channel 1 = vessel
  Var<S> vessel;                // {1, D, H, W}
  Var<S> margin;                // {1, D, H, W} vessel minus background logit
};

// Stem conv, then per level below the first 2 residual blocks after a 2x max
// pool. The decoder mirrors it: 2 residual blocks per level, upsampling and
// skip concatenation between levels. 1x1x1 head to 2 classes + softmax.
template <typename S>
class Unet {
 public:
  Unet(const NetworkConfig& cfg, ParameterStore<S>& store, const std::string& name, std::mt19937_64& rng);

  // x: {1, D, H, W} matching cfg.input.
  UnetOutput<S> forward(Tape<S>& tape, const Var<S>& x, FusionHooks<S>* hooks = nullptr) const;
  [[nodiscard]] const NetworkConfig& config() const { return cfg_; }

 private:
  NetworkConfig cfg_;
  Conv3d<S> stem_;
  std::vector<ResBlock<S>> enc_;  // 2 per level >= 1
  std::vector<ResBlock<S>> dec_;  // 2 per level
  Conv3d<S> head_;
};

}  // namespace vgseg::model
