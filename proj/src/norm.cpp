#include "dstf/norm.hpp"

#include "dstf/errors.hpp"
#include "dstf/ops.hpp"

namespace dstf {

template <typename Real>
ChannelLayerNorm<Real>::ChannelLayerNorm(std::size_t heads, std::size_t head_dim, double eps)
    : heads_(heads), head_dim_(head_dim), eps_(eps) {
  if (heads == 0 || head_dim == 0) throw ConfigError("channel layernorm: dimensions must be positive");
  if (!(eps > 0.0)) throw ConfigError("channel layernorm: epsilon must be positive");
  gamma_ = Tensor<Real>(Shape{heads, head_dim}, Real(1));
  beta_ = Tensor<Real>(Shape{heads, head_dim}, Real(0));
  gamma_.set_requires_grad();
  beta_.set_requires_grad();
}

template <typename Real>
ChannelLayerNorm<Real> ChannelLayerNorm<Real>::for_width(std::size_t width, std::size_t heads, double eps) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("channel layernorm: D=" + std::to_string(width) + " is not divisible by H=" +
                      std::to_string(heads));
  }
  return ChannelLayerNorm(heads, width / heads, eps);
}

template <typename Real>
Tensor<Real> ChannelLayerNorm<Real>::forward(const Tensor<Real>& x) const {
  const Shape& s = x.shape();
  if (s.empty() || s.back() != heads_ * head_dim_) {
    throw DimensionError("channel layernorm: input " + shape_to_string(s) + " does not have width " +
                         std::to_string(heads_ * head_dim_));
  }
  auto normalized = normalize_groups(x, head_dim_, static_cast<Real>(eps_));
  return channel_affine(normalized, gamma_, beta_);
}

template <typename Real>
void ChannelLayerNorm<Real>::collect_parameters(const std::string& prefix, ParameterList<Real>& out) const {
  out.push_back({prefix + ".gamma", gamma_, ParamKind::Norm, "-"});
  out.push_back({prefix + ".beta", beta_, ParamKind::Norm, "-"});
}

template class ChannelLayerNorm<float>;
template class ChannelLayerNorm<double>;

}  // namespace dstf
