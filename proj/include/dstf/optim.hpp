#pragma once

#include <cstddef>
#include <vector>

#include "dstf/parameter.hpp"

namespace dstf {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

// Linear warmup 0 -> base over `warmup` steps, then cosine from base to floor at `total`.
struct Schedule {
  double base_lr = 3e-4;
  double floor_lr = 3e-5;
  std::size_t warmup = 1000;
  std::size_t total = 10000;
};

double lr_at(const Schedule& schedule, std::size_t step);

// L2 norm over every populated gradient, accumulated in double.
template <typename Real>
double global_grad_norm(const ParameterList<Real>& params);

// Scales all gradients by max_norm / norm when the global norm exceeds max_norm.
// Returns the factor applied (1 when untouched).
template <typename Real>
double clip_global_norm(const ParameterList<Real>& params, double max_norm = 1.0);

// Adam with bias correction and decoupled weight decay (applied first, only to
// parameters whose decays() is true).
template <typename Real>
class AdamW {
 public:
  AdamW(ParameterList<Real> params, AdamWConfig config = {});

  void step(double lr);
  std::size_t steps() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  ParameterList<Real> params_;
  AdamWConfig config_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace dstf
