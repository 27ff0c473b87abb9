#pragma once

#include <string>

#include "dstf/parameter.hpp"
#include "dstf/tensor.hpp"

namespace dstf {

inline constexpr double kNormEpsilon = 1e-5;

// LayerNorm whose statistics are computed independently over each head's
// d_h slice, with per-head affine parameters gamma_h, beta_h.
template <typename Real>
class ChannelLayerNorm {
 public:
  ChannelLayerNorm() = default;
  ChannelLayerNorm(std::size_t heads, std::size_t head_dim, double eps = kNormEpsilon);

  // Throws ConfigError when width is not divisible by heads.
  static ChannelLayerNorm for_width(std::size_t width, std::size_t heads, double eps = kNormEpsilon);

  // x: [..., H*d_h]
  Tensor<Real> forward(const Tensor<Real>& x) const;

  std::size_t heads() const { return heads_; }
  std::size_t head_dim() const { return head_dim_; }
  double epsilon() const { return eps_; }
  const Tensor<Real>& gamma() const { return gamma_; }
  const Tensor<Real>& beta() const { return beta_; }
  Tensor<Real>& gamma() { return gamma_; }
  Tensor<Real>& beta() { return beta_; }

  void collect_parameters(const std::string& prefix, ParameterList<Real>& out) const;

 private:
  std::size_t heads_ = 0;
  std::size_t head_dim_ = 0;
  double eps_ = kNormEpsilon;
  Tensor<Real> gamma_;  // [H, d_h], starts at 1
  Tensor<Real> beta_;   // [H, d_h], starts at 0
};

// Standard LayerNorm over the full width: the single-head case.
template <typename Real>
class LayerNorm : public ChannelLayerNorm<Real> {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t width, double eps = kNormEpsilon) : ChannelLayerNorm<Real>(1, width, eps) {}
};

}  // namespace dstf
