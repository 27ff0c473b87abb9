#pragma once

#include <cstdint>
#include <vector>

#include "dstf/rng.hpp"
#include "dstf/tensor.hpp"

namespace testing {

template <typename Real>
dstf::Tensor<Real> random_tensor(dstf::Shape shape, dstf::Rng& rng, double scale = 1.0, bool leaf = true) {
  std::vector<Real> v(dstf::shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(rng.normal(0.0, scale));
  dstf::Tensor<Real> t(std::move(shape), std::move(v));
  if (leaf) t.set_requires_grad();
  return t;
}

inline dstf::TokenIds random_ids(dstf::Shape shape, std::size_t vocab, dstf::Rng& rng) {
  std::vector<std::int32_t> ids(dstf::shape_numel(shape));
  for (auto& id : ids) id = static_cast<std::int32_t>(rng.below(vocab));
  return dstf::TokenIds(std::move(shape), std::move(ids));
}

}  // namespace testing
