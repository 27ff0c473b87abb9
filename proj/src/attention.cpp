#include "dstf/attention.hpp"

#include <cmath>

#include "dstf/errors.hpp"
#include "dstf/ops.hpp"

namespace dstf {

template <typename Real>
Tensor<Real> amplified_weights(const Tensor<Real>& logits, Real alpha) {
  if (!(alpha > Real(0))) throw UsageError("attention: amplification alpha must be > 0");
  return softmax(causal_mask(logits), -1, alpha);
}

template <typename Real>
AttentionLayer<Real>::AttentionLayer(std::size_t d_model, std::size_t heads, MixingStrategy v_strategy,
                                     MixingStrategy o_strategy, bool gated, bool mixing_bias)
    : d_model_(d_model), heads_(heads) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("attention: D=" + std::to_string(d_model) + " is not divisible by H=" + std::to_string(heads));
  }
  head_dim_ = d_model / heads;
  wq_ = Tensor<Real>(Shape{d_model, d_model});
  wk_ = Tensor<Real>(Shape{d_model, d_model});
  wq_.set_requires_grad();
  wk_.set_requires_grad();
  v_mix_ = MixingLinear<Real>(v_strategy, heads, head_dim_, head_dim_, mixing_bias);
  o_mix_ = MixingLinear<Real>(o_strategy, heads, head_dim_, head_dim_, mixing_bias);
  cln_combined_ = ChannelLayerNorm<Real>(heads, head_dim_);
  cln_token_ = ChannelLayerNorm<Real>(heads, head_dim_);
  if (gated) {
    gate_ = Tensor<Real>(Shape{heads, head_dim_});
    gate_.set_requires_grad();
  }
}

template <typename Real>
void AttentionLayer<Real>::init(std::uint64_t seed, const std::string& prefix, double stddev) {
  wq_ = normal_parameter<Real>(wq_.shape(), seed, prefix + ".wq", stddev);
  wk_ = normal_parameter<Real>(wk_.shape(), seed, prefix + ".wk", stddev);
  v_mix_.init(seed, prefix + ".v_mix", stddev);
  o_mix_.init(seed, prefix + ".o_mix", stddev);
  if (gate_.defined()) gate_ = normal_parameter<Real>(gate_.shape(), seed, prefix + ".gate", stddev);
}

template <typename Real>
AttentionOutput<Real> AttentionLayer<Real>::attend(const Tensor<Real>& x_t, const Tensor<Real>& x_e, Real alpha,
                                                   bool values_from_combined) const {
  if (!(alpha > Real(0))) throw UsageError("attention: amplification alpha must be > 0");
  const Shape& s = x_t.shape();
  if (s.size() != 3 || s[2] != d_model_ || x_e.shape() != s) {
    throw DimensionError("attention: expected two [B,T," + std::to_string(d_model_) + "] streams, got " +
                         shape_to_string(s) + " and " + shape_to_string(x_e.shape()));
  }
  const auto combined = add(x_t, x_e);
  const auto normed = cln_combined_.forward(combined);
  const auto q = linear(normed, wq_);
  const auto k = linear(normed, wk_);
  const auto v = v_mix_.apply(cln_token_.forward(values_from_combined ? combined : x_t));

  const auto qh = split_heads(q, heads_);
  const auto kh = split_heads(k, heads_);
  const auto vh = split_heads(v, heads_);

  AttentionOutput<Real> out;
  const Real inv_sqrt_dh = Real(1) / std::sqrt(static_cast<Real>(head_dim_));
  out.logits = scale(matmul(qh, transpose_last2(kh)), inv_sqrt_dh);
  out.weights = amplified_weights(out.logits, alpha);
  auto context = merge_heads(matmul(out.weights, vh));
  if (gate_.defined()) {
    // g_h = sigmoid(<w_gate_h, q_h>), one scalar per head and position, applied before o_mix.
    out.gates = sigmoid(head_dot(q, gate_));
    context = scale_heads(context, out.gates);
  }
  out.delta = o_mix_.apply(context);
  return out;
}

template <typename Real>
void AttentionLayer<Real>::collect_parameters(const std::string& prefix, ParameterList<Real>& out) const {
  cln_combined_.collect_parameters(prefix + ".cln_combined", out);
  cln_token_.collect_parameters(prefix + ".cln_token", out);
  out.push_back({prefix + ".wq", wq_, ParamKind::Weight, "dns"});
  out.push_back({prefix + ".wk", wk_, ParamKind::Weight, "dns"});
  v_mix_.collect_parameters(prefix + ".v_mix", out);
  o_mix_.collect_parameters(prefix + ".o_mix", out);
  if (gate_.defined()) out.push_back({prefix + ".gate", gate_, ParamKind::Weight, "-"});
}

template Tensor<float> amplified_weights(const Tensor<float>&, float);
template Tensor<double> amplified_weights(const Tensor<double>&, double);
template class AttentionLayer<float>;
template class AttentionLayer<double>;

}  // namespace dstf
