#include "dstf/parameter.hpp"

#include "dstf/rng.hpp"

namespace dstf {

template <typename Real>
Tensor<Real> normal_parameter(Shape shape, std::uint64_t seed, const std::string& name, double stddev) {
  Tensor<Real> t(std::move(shape));
  Rng rng = Rng::for_stream(seed, name);
  for (auto& v : t.mutable_data()) v = static_cast<Real>(rng.normal(0.0, stddev));
  t.set_requires_grad();
  return t;
}

template Tensor<float> normal_parameter(Shape, std::uint64_t, const std::string&, double);
template Tensor<double> normal_parameter(Shape, std::uint64_t, const std::string&, double);

}  // namespace dstf
