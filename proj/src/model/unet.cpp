#include "vgseg/model/unet.hpp"

namespace vgseg::model {

template <typename S>
Unet<S>::Unet(const NetworkConfig& cfg, ParameterStore<S>& store, const std::string& name, std::mt19937_64& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int L = cfg_.levels;
  stem_ = Conv3d<S>(store, name + ".stem", 1, cfg_.channels(0), 3, rng);
  for (int l = 1; l < L; ++l) {
    const std::string p = name + ".enc" + std::to_string(l);
    enc_.emplace_back(store, p + ".0", cfg_.channels(l - 1), cfg_.channels(l), rng);
    enc_.emplace_back(store, p + ".1", cfg_.channels(l), cfg_.channels(l), rng);
  }
  dec_.resize(std::size_t(2 * L));
  for (int l = L - 1; l >= 0; --l) {
    const std::string p = name + ".dec" + std::to_string(l);
    const int cin = l == L - 1 ? cfg_.channels(l) : cfg_.channels(l + 1) + cfg_.channels(l);
    dec_[std::size_t(2 * l)] = ResBlock<S>(store, p + ".0", cin, cfg_.channels(l), rng);
    dec_[std::size_t(2 * l + 1)] = ResBlock<S>(store, p + ".1", cfg_.channels(l), cfg_.channels(l), rng);
  }
  head_ = Conv3d<S>(store, name + ".head", cfg_.channels(0), 2, 1, rng, 1.0);
}

template <typename S>
UnetOutput<S> Unet<S>::forward(Tape<S>& tape, const Var<S>& x, FusionHooks<S>* hooks) const {
  const ad::Shape want{1, cfg_.input.d, cfg_.input.h, cfg_.input.w};
  if (x.shape() != want) {
    throw ContractError("unet input " + ad::to_string(x.shape()) + " does not match " + ad::to_string(want));
  }
  const int L = cfg_.levels;
  UnetOutput<S> out;
  Var<S> h = ad::relu(stem_(tape, x));
  for (int l = 0; l < L; ++l) {
    if (l > 0) {
      h = ad::maxpool3d(out.encoder.back());
      h = enc_[std::size_t(2 * (l - 1))](tape, h);
      h = enc_[std::size_t(2 * (l - 1) + 1)](tape, h);
    }
    out.encoder.push_back(hooks ? hooks->encoder(l, h) : h);
  }
  out.decoder.resize(std::size_t(L));
  for (int l = L - 1; l >= 0; --l) {
    Var<S> in = l == L - 1 ? out.encoder[std::size_t(l)]
                           : ad::concat_channels(ad::upsample2(out.decoder[std::size_t(l + 1)], cfg_.upsample),
                                                 out.encoder[std::size_t(l)]);
    Var<S> d = dec_[std::size_t(2 * l + 1)](tape, dec_[std::size_t(2 * l)](tape, in));
    out.decoder[std::size_t(l)] = hooks ? hooks->decoder(l, d) : d;
  }
  auto logits = head_(tape, out.decoder[0]);
  out.margin = ad::slice_channel(logits, 1) - ad::slice_channel(logits, 0);
  out.probs = ad::channel_softmax(logits);
  out.vessel = ad::slice_channel(out.probs, 1);
  return out;
}

template class Unet<float>;
template class Unet<double>;

}  // namespace vgseg::model
