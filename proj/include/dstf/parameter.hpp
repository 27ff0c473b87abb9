#pragma once

#include <string>
#include <vector>

#include "dstf/tensor.hpp"

namespace dstf {

enum class ParamKind { Weight, Bias, Norm, Embedding };

// A trainable tensor as seen by the optimizer, the census, and checkpoints.
template <typename Real>
struct NamedParameter {
  std::string name;
  Tensor<Real> tensor;
  ParamKind kind = ParamKind::Weight;
  std::string strategy;  // mixing strategy token for mixing sites, "-" elsewhere

  // Decoupled weight decay skips norm gains/biases, biases and embeddings.
  bool decays() const { return kind == ParamKind::Weight; }
};

template <typename Real>
using ParameterList = std::vector<NamedParameter<Real>>;

// Fresh trainable leaf filled from N(0, stddev^2) using the stream named `name`.
template <typename Real>
Tensor<Real> normal_parameter(Shape shape, std::uint64_t seed, const std::string& name, double stddev);

}  // namespace dstf
