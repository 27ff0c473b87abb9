#include "dstf/optim.hpp"

#include <cmath>
#include <numbers>

#include "dstf/errors.hpp"

namespace dstf {

double lr_at(const Schedule& s, std::size_t step) {
  if (step < s.warmup) return s.base_lr * static_cast<double>(step) / static_cast<double>(s.warmup);
  if (step >= s.total) return s.floor_lr;
  const double progress = static_cast<double>(step - s.warmup) / static_cast<double>(s.total - s.warmup);
  return s.floor_lr + (s.base_lr - s.floor_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename Real>
double global_grad_norm(const ParameterList<Real>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (Real g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

template <typename Real>
double clip_global_norm(const ParameterList<Real>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (!(norm > max_norm)) return 1.0;
  const double factor = max_norm / norm;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    auto t = p.tensor;
    for (auto& g : t.mutable_grad()) g = static_cast<Real>(g * factor);
  }
  return factor;
}

template <typename Real>
AdamW<Real>::AdamW(ParameterList<Real> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

template <typename Real>
void AdamW<Real>::step(double lr) {
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto t = params_[i].tensor;
    auto theta = t.mutable_data();
    if (m_[i].size() != theta.size()) throw UsageError("adamw: moment shape drifted for " + params_[i].name);
    const double decay = params_[i].decays() ? lr * config_.weight_decay : 0.0;
    const bool has_grad = t.has_grad();
    const auto grad = has_grad ? t.grad() : std::span<const Real>{};
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      double w = static_cast<double>(theta[j]);
      w -= decay * w;
      const double g = has_grad ? static_cast<double>(grad[j]) : 0.0;
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w -= lr * mhat / (std::sqrt(vhat) + config_.eps);
      theta[j] = static_cast<Real>(w);
    }
  }
}

template double global_grad_norm(const ParameterList<float>&);
template double global_grad_norm(const ParameterList<double>&);
template double clip_global_norm(const ParameterList<float>&, double);
template double clip_global_norm(const ParameterList<double>&, double);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace dstf
