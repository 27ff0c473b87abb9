#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dstf/tensor.hpp"

namespace testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Central differences against the tape's gradients. Relative error is
// |a - n| / max(|a|, |n|, floor).
inline GradCheckResult check_gradients(const std::function<dstf::Tensord()>& loss_fn,
                                       std::vector<std::pair<std::string, dstf::Tensord>> leaves, double step = 1e-5,
                                       double floor = 1e-6, std::size_t max_per_leaf = 0) {
  for (auto& [name, t] : leaves) t.zero_grad();
  {
    auto loss = loss_fn();
    dstf::backward(loss);
  }
  GradCheckResult result;
  dstf::NoGradGuard no_grad;
  for (auto& [name, t] : leaves) {
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end()) : std::vector<double>(t.numel(), 0.0);
    auto data = t.mutable_data();
    const std::size_t n = data.size();
    const std::size_t stride = max_per_leaf && n > max_per_leaf ? n / max_per_leaf : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = data[i];
      data[i] = orig + step;
      const double up = loss_fn().item();
      data[i] = orig - step;
      const double down = loss_fn().item();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic[i]) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace testing
