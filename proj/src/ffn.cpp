#include "dstf/ffn.hpp"

#include "dstf/errors.hpp"
#include "dstf/ops.hpp"

namespace dstf {

namespace {

bool channelized(MixingStrategy s) { return s != MixingStrategy::Dense; }

}  // namespace

template <typename Real>
FfnLayer<Real>::FfnLayer(std::size_t d_model, std::size_t heads, std::size_t d_ff, MixingStrategy up,
                         MixingStrategy down, bool mixing_bias)
    : d_model_(d_model) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("ffn: D=" + std::to_string(d_model) + " is not divisible by H=" + std::to_string(heads));
  }
  if ((channelized(up) || channelized(down)) && d_ff % heads != 0) {
    throw ConfigError("ffn: d_ff=" + std::to_string(d_ff) + " is not divisible by H=" + std::to_string(heads));
  }
  cln_ = ChannelLayerNorm<Real>(heads, d_model / heads);
  const std::size_t dh = d_model / heads;
  if (d_ff % heads == 0) {
    up_mix_ = MixingLinear<Real>(up, heads, dh, d_ff / heads, mixing_bias);
    down_mix_ = MixingLinear<Real>(down, heads, d_ff / heads, dh, mixing_bias);
  } else {
    // Dense on both sides; head structure is irrelevant.
    up_mix_ = MixingLinear<Real>(up, 1, d_model, d_ff, mixing_bias);
    down_mix_ = MixingLinear<Real>(down, 1, d_ff, d_model, mixing_bias);
  }
}

template <typename Real>
void FfnLayer<Real>::init(std::uint64_t seed, const std::string& prefix, double stddev) {
  up_mix_.init(seed, prefix + ".up_mix", stddev);
  down_mix_.init(seed, prefix + ".down_mix", stddev);
}

template <typename Real>
Tensor<Real> FfnLayer<Real>::forward(const Tensor<Real>& x_t, const Tensor<Real>& x_e) const {
  const Shape& s = x_t.shape();
  if (s.empty() || s.back() != d_model_ || x_e.shape() != s) {
    throw DimensionError("ffn: expected two [..., " + std::to_string(d_model_) + "] streams, got " +
                         shape_to_string(s) + " and " + shape_to_string(x_e.shape()));
  }
  const auto hidden = gelu(up_mix_.apply(cln_.forward(add(x_t, x_e))));
  return down_mix_.apply(hidden);
}

template <typename Real>
void FfnLayer<Real>::collect_parameters(const std::string& prefix, ParameterList<Real>& out) const {
  cln_.collect_parameters(prefix + ".cln", out);
  up_mix_.collect_parameters(prefix + ".up_mix", out);
  down_mix_.collect_parameters(prefix + ".down_mix", out);
}

template class FfnLayer<float>;
template class FfnLayer<double>;

}  // namespace dstf
