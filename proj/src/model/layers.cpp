#include "vgseg/model/layers.hpp"

#include <cmath>

namespace vgseg::model {

void NetworkConfig::validate() const {
  if (levels < 2) throw ConfigError("network.levels must be >= 2");
  if (base_channels < 1) throw ConfigError("network.base_channels must be >= 1");
  if (node_dim < 1) throw ConfigError("network.node_dim must be >= 1");
  if (k < 1) throw ConfigError("network.k must be >= 1");
  if (!(pool_ratio > 0.0 && pool_ratio <= 1.0)) throw ConfigError("network.pool_ratio must be in (0, 1]");
  const int div = 1 << (levels - 1);
  if (input.empty() || input.d % div || input.h % div || input.w % div) {
    throw ConfigError("network.input " + to_string(input) + " must be divisible by " + std::to_string(div));
  }
}

namespace {

template <typename S>
Tensor<S> normal_tensor(ad::Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor<S> t(std::move(shape));
  std::normal_distribution<double> nd(0.0, stddev);
  for (Eigen::Index i = 0; i < t.numel(); ++i) t[i] = S(nd(rng));
  return t;
}

}  // namespace

// damped residual branch; without normalization the sum would double the
// activation variance per block
constexpr double kResidualGain = 0.5;

template <typename S>
Conv3d<S>::Conv3d(ParameterStore<S>& store, const std::string& name, int cin, int cout, int k,
                  std::mt19937_64& rng, double gain) {
  const double fan_in = double(cin) * k * k * k;
  w_ = &store.add(name + ".w", normal_tensor<S>({cout, cin, k, k, k}, gain / std::sqrt(fan_in), rng));
  b_ = &store.add(name + ".b", Tensor<S>(ad::Shape{cout}));
}

template <typename S>
Var<S> Conv3d<S>::operator()(Tape<S>& tape, const Var<S>& x) const {
  return ad::conv3d(x, tape.param(*w_), tape.param(*b_));
}

template <typename S>
ResBlock<S>::ResBlock(ParameterStore<S>& store, const std::string& name, int cin, int cout, std::mt19937_64& rng)
    : c1_(store, name + ".conv1", cin, cout, 3, rng),
      c2_(store, name + ".conv2", cout, cout, 3, rng, kResidualGain),
      project_(cin != cout) {
  if (project_) skip_ = Conv3d<S>(store, name + ".skip", cin, cout, 1, rng);
}

template <typename S>
Var<S> ResBlock<S>::operator()(Tape<S>& tape, const Var<S>& x) const {
  auto h = c2_(tape, ad::relu(c1_(tape, x)));
  return ad::relu(h + (project_ ? skip_(tape, x) : x));
}

template <typename S>
Parameter<S>& dense_param(ParameterStore<S>& store, const std::string& name, int rows, int cols, double scale,
                          std::mt19937_64& rng) {
  return store.add(name, normal_tensor<S>({rows, cols}, scale, rng));
}

template class Conv3d<float>;
template class Conv3d<double>;
template class ResBlock<float>;
template class ResBlock<double>;
template Parameter<float>& dense_param(ParameterStore<float>&, const std::string&, int, int, double, std::mt19937_64&);
template Parameter<double>& dense_param(ParameterStore<double>&, const std::string&, int, int, double,
                                        std::mt19937_64&);

}  // namespace vgseg::model
