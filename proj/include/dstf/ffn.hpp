#pragma once

#include <string>

#include "dstf/mixing.hpp"
#include "dstf/norm.hpp"
#include "dstf/parameter.hpp"
#include "dstf/tensor.hpp"

namespace dstf {

// Feed-forward block: reads the combined stream, returns the context-stream update
//   down_mix(GELU(up_mix(CLN(x_t + x_e)))).
// Channelized mixing splits the hidden width into H contiguous channels of d_ff/H.
template <typename Real>
class FfnLayer {
 public:
  FfnLayer() = default;
  FfnLayer(std::size_t d_model, std::size_t heads, std::size_t d_ff, MixingStrategy up, MixingStrategy down,
           bool mixing_bias = false);

  void init(std::uint64_t seed, const std::string& prefix, double stddev);

  Tensor<Real> forward(const Tensor<Real>& x_t, const Tensor<Real>& x_e) const;

  MixingLinear<Real>& up_mix() { return up_mix_; }
  MixingLinear<Real>& down_mix() { return down_mix_; }
  const MixingLinear<Real>& up_mix() const { return up_mix_; }
  const MixingLinear<Real>& down_mix() const { return down_mix_; }
  ChannelLayerNorm<Real>& cln() { return cln_; }
  const ChannelLayerNorm<Real>& cln() const { return cln_; }

  void collect_parameters(const std::string& prefix, ParameterList<Real>& out) const;

 private:
  std::size_t d_model_ = 0;
  ChannelLayerNorm<Real> cln_;
  MixingLinear<Real> up_mix_;
  MixingLinear<Real> down_mix_;
};

}  // namespace dstf
