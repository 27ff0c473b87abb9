#pragma once

#include <cstdint>
#include <vector>

#include "dstf/tensor.hpp"

// Differentiable tensor operations. Every op records itself on the calling
// thread's tape when grad mode is on and an input requires a gradient.
// Broadcasting is limited to exact batch-dimension matches, scalars, and the
// per-channel forms named explicitly below.
namespace dstf {

inline constexpr std::int32_t kIgnoreIndex = -1;

template <typename Real> Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> scale(const Tensor<Real>& a, Real factor);

// Reductions to a [1] scalar.
template <typename Real> Tensor<Real> sum(const Tensor<Real>& a);
template <typename Real> Tensor<Real> mean(const Tensor<Real>& a);

// a[..., m, k] x b[..., k, n]; leading dims must match exactly.
template <typename Real> Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> transpose_last2(const Tensor<Real>& a);
// x[..., k] x w[k, n] (+ bias[n]); the shared dense kernel.
template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias = {});

// Numerically stable softmax of scale * x along `axis`.
template <typename Real> Tensor<Real> softmax(const Tensor<Real>& x, int axis = -1, Real scale = Real(1));
// Sets entries above the diagonal of the trailing [T, T] block to -inf.
template <typename Real> Tensor<Real> causal_mask(const Tensor<Real>& x);

template <typename Real> Tensor<Real> gelu(const Tensor<Real>& x);  // exact erf form
template <typename Real> Tensor<Real> sigmoid(const Tensor<Real>& x);

template <typename Real> Tensor<Real> reshape(const Tensor<Real>& x, Shape shape);
template <typename Real> Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, int axis = -1);

// [B, T, H*d] <-> [B, H, T, d]
template <typename Real> Tensor<Real> split_heads(const Tensor<Real>& x, std::size_t heads);
template <typename Real> Tensor<Real> merge_heads(const Tensor<Real>& x);

// Mean / biased variance over consecutive groups of `group` trailing values:
// [..., G*group] -> [..., G].
template <typename Real> Tensor<Real> mean_groups(const Tensor<Real>& x, std::size_t group);
template <typename Real> Tensor<Real> var_groups(const Tensor<Real>& x, std::size_t group);
// (x - mean) / sqrt(var + eps) within each trailing group.
template <typename Real> Tensor<Real> normalize_groups(const Tensor<Real>& x, std::size_t group, Real eps);
// x * gamma + beta with gamma, beta holding one value per trailing channel.
template <typename Real>
Tensor<Real> channel_affine(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta);

// table[V, D] gathered at ids -> ids.shape + [D]. Ids outside [0, V) raise DataError.
template <typename Real> Tensor<Real> embedding(const TokenIds& ids, const Tensor<Real>& table);

// Mean over positions of -log softmax(logits)[target]; targets equal to
// kIgnoreIndex are skipped. logits: ids.shape + [V].
template <typename Real> Tensor<Real> cross_entropy(const Tensor<Real>& logits, const TokenIds& targets);

// Head-structured kernels. `x` carries heads on its last dim as H contiguous slices.
// y[.., k, i] = sum_h w[k, h] x[.., h, i]           (w: [H, H])
template <typename Real> Tensor<Real> kron_mix(const Tensor<Real>& x, const Tensor<Real>& w);
// y[.., h, o] = sum_i x[.., h, i] w[h, i, o]         (w: [H, d_in, d_out])
template <typename Real> Tensor<Real> per_head_linear(const Tensor<Real>& x, const Tensor<Real>& w);
// y[.., h] = sum_i x[.., h, i] w[h, i]               (w: [H, d])
template <typename Real> Tensor<Real> head_dot(const Tensor<Real>& x, const Tensor<Real>& w);
// y[.., h, i] = x[.., h, i] g[.., h]                 (g: x.shape[:-1] + [H])
template <typename Real> Tensor<Real> scale_heads(const Tensor<Real>& x, const Tensor<Real>& g);

}  // namespace dstf
