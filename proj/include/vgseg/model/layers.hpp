#pragma once

#include <cmath>

#include <random>
#include <string>

#include "vgseg/autodiff/ops.hpp"

namespace vgseg::model {

using ad::Parameter;
using ad::ParameterStore;
using ad::Tape;
using ad::Tensor;
using ad::Var;

struct NetworkConfig {
  int levels = 3;
  int base_channels = 8;
  int node_dim = 32;
  Dims input{48, 48, 48};
  int k = 3;
  double pool_ratio = 0.5;
  ad::Upsample upsample = ad::Upsample::Nearest;

  // Throws ConfigError naming the offending field.
  void validate() const;
  [[nodiscard]] int channels(int level) const { return base_channels << level; }
  [[nodiscard]] Dims grid(int level) const {
    return {input.d >> level, input.h >> level, input.w >> level};
  }
};

// He-normal weights, zero bias.
template <typename S>
class Conv3d {
 public:
  Conv3d() = default;
  // Weights ~ N(0, gain^2 / fan_in); gain sqrt(2) is He init.
  Conv3d(ParameterStore<S>& store, const std::string& name, int cin, int cout, int k, std::mt19937_64& rng,
         double gain = std::sqrt(2.0));

  Var<S> operator()(Tape<S>& tape, const Var<S>& x) const;
  [[nodiscard]] Parameter<S>& weight() const { return *w_; }
  [[nodiscard]] Parameter<S>& bias() const { return *b_; }

 private:
  Parameter<S>* w_ = nullptr;
  Parameter<S>* b_ = nullptr;
};

// relu(conv3(relu(conv3(x))) + skip(x)); skip is a 1x1x1 conv when widths differ.
template <typename S>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(ParameterStore<S>& store, const std::string& name, int cin, int cout, std::mt19937_64& rng);

  Var<S> operator()(Tape<S>& tape, const Var<S>& x) const;

 private:
  Conv3d<S> c1_, c2_, skip_;
  bool project_ = false;
};

// Dense {rows, cols} parameter with N(0, scale^2) entries.
template <typename S>
Parameter<S>& dense_param(ParameterStore<S>& store, const std::string& name, int rows, int cols, double scale,
                          std::mt19937_64& rng);

}  // namespace vgseg::model
