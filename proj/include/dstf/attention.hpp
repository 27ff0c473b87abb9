#pragma once

#include <string>

#include "dstf/mixing.hpp"
#include "dstf/norm.hpp"
#include "dstf/parameter.hpp"
#include "dstf/tensor.hpp"

namespace dstf {

template <typename Real>
struct AttentionOutput {
  Tensor<Real> delta;    // [B, T, D], written into the token stream by the caller
  Tensor<Real> weights;  // [B, H, T, T], causal, rows sum to 1
  Tensor<Real> logits;   // [B, H, T, T], QK^T / sqrt(d_h) before masking and amplification
  Tensor<Real> gates;    // [B, T, H] when gating is enabled
};

// softmax(alpha * logits) under the causal mask. The mask is applied to the
// amplified logits, so masked keys keep probability 0 for every alpha.
template <typename Real>
Tensor<Real> amplified_weights(const Tensor<Real>& logits, Real alpha);

// Dual-stream multi-head attention: dense Q/K read the normalized combined
// stream, V is a mixing projection of the normalized token stream.
template <typename Real>
class AttentionLayer {
 public:
  AttentionLayer() = default;
  AttentionLayer(std::size_t d_model, std::size_t heads, MixingStrategy v_strategy, MixingStrategy o_strategy,
                 bool gated = false, bool mixing_bias = false);

  void init(std::uint64_t seed, const std::string& prefix, double stddev);

  // values_from_combined selects cln_token(x_t + x_e) as the V input (single-stream mode).
  AttentionOutput<Real> attend(const Tensor<Real>& x_t, const Tensor<Real>& x_e, Real alpha = Real(1),
                               bool values_from_combined = false) const;

  std::size_t heads() const { return heads_; }
  std::size_t head_dim() const { return head_dim_; }
  bool gated() const { return gate_.defined(); }

  Tensor<Real>& wq() { return wq_; }
  Tensor<Real>& wk() { return wk_; }
  const Tensor<Real>& wq() const { return wq_; }
  const Tensor<Real>& wk() const { return wk_; }
  MixingLinear<Real>& v_mix() { return v_mix_; }
  MixingLinear<Real>& o_mix() { return o_mix_; }
  const MixingLinear<Real>& v_mix() const { return v_mix_; }
  const MixingLinear<Real>& o_mix() const { return o_mix_; }
  ChannelLayerNorm<Real>& cln_combined() { return cln_combined_; }
  ChannelLayerNorm<Real>& cln_token() { return cln_token_; }
  const ChannelLayerNorm<Real>& cln_combined() const { return cln_combined_; }
  const ChannelLayerNorm<Real>& cln_token() const { return cln_token_; }
  const Tensor<Real>& gate() const { return gate_; }
  Tensor<Real>& gate() { return gate_; }

  void collect_parameters(const std::string& prefix, ParameterList<Real>& out) const;

 private:
  std::size_t d_model_ = 0;
  std::size_t heads_ = 0;
  std::size_t head_dim_ = 0;
  Tensor<Real> wq_;  // [D, D], x * W
  Tensor<Real> wk_;  // [D, D]
  MixingLinear<Real> v_mix_;
  MixingLinear<Real> o_mix_;
  ChannelLayerNorm<Real> cln_combined_;
  ChannelLayerNorm<Real> cln_token_;
  Tensor<Real> gate_;  // [H, d_h]
};

}  // namespace dstf
