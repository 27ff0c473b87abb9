#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "dstf/errors.hpp"
#include "dstf/norm.hpp"
#include "dstf/ops.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace dstf;
using testing::random_tensor;

namespace {

template <typename Norm>
void randomize_affine(Norm& norm, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& g : norm.gamma().mutable_data()) g = 1.0 + rng.normal(0.0, 0.3);
  for (auto& b : norm.beta().mutable_data()) b = rng.normal(0.0, 0.3);
}

}  // namespace

TEST_CASE("fresh parameters") {
  ChannelLayerNorm<float> n(4, 8);
  for (float g : n.gamma().data()) CHECK(g == 1.0f);
  for (float b : n.beta().data()) CHECK(b == 0.0f);
  CHECK(n.epsilon() == 1e-5);
  CHECK_THROWS_AS(ChannelLayerNorm<float>::for_width(30, 4), ConfigError);
  CHECK_THROWS_AS(n.forward(Tensorf(Shape{1, 2, 30})), DimensionError);
}

TEST_CASE("constant head slice normalizes to zero") {
  ChannelLayerNorm<double> n(2, 4);
  Tensord x(Shape{1, 1, 8}, std::vector<double>{3, 3, 3, 3, 1, 2, 3, 4});
  const auto y = n.forward(x);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.at(i) == 0.0);
  CHECK(y.at(4) < 0.0);
}

TEST_CASE("standardized slice passes through") {
  ChannelLayerNorm<double> n(2, 4);
  std::vector<double> v = {-1, 1, -1, 1, 0.5, -0.5, 0.5, -0.5};  // head 0: mean 0 var 1
  const auto y = n.forward(Tensord(Shape{1, 1, 8}, v));
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y.at(i) - v[i]) < 1e-3);
}

TEST_CASE("per-head loop oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ChannelLayerNorm<float> n(4, 8);
    randomize_affine(n, seed);
    Rng rng(seed + 50);
    const auto x = random_tensor<float>(Shape{2, 3, 32}, rng, 2.0, false);
    const auto got = oracle::values(n.forward(x));
    const auto want = oracle::cln(n, oracle::values(x), 6);
    double m = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) m = std::max(m, std::abs(got[i] - want[i]));
    CHECK(m < 1e-6);
  }
}

TEST_CASE("output statistics") {
  ChannelLayerNorm<double> n(4, 16);
  Rng rng(3);
  const auto x = random_tensor<double>(Shape{3, 5, 64}, rng, 10.0, false);
  const auto y = n.forward(x);
  for (std::size_t r = 0; r < 15; ++r)
    for (std::size_t h = 0; h < 4; ++h) {
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < 16; ++i) mean += y.at(r * 64 + h * 16 + i);
      mean /= 16;
      for (std::size_t i = 0; i < 16; ++i) var += std::pow(y.at(r * 64 + h * 16 + i) - mean, 2);
      var /= 16;
      CHECK(std::abs(mean) < 1e-5);
      CHECK(std::abs(var - 1.0) < 1e-3);
    }
}

TEST_CASE("head isolation") {
  ChannelLayerNorm<double> n(4, 4);
  randomize_affine(n, 4);
  Rng rng(5);
  auto x = random_tensor<double>(Shape{1, 2, 16}, rng);
  const auto base = n.forward(x);

  NoGradGuard guard;
  std::vector<double> moved(x.data().begin(), x.data().end());
  for (std::size_t c = 4; c < 8; ++c) moved[c] += 5.0 * static_cast<double>(c);
  const auto pert = n.forward(Tensord(x.shape(), moved));
  for (std::size_t c = 0; c < 16; ++c) {
    if (c >= 4 && c < 8) continue;
    CHECK(pert.at(c) == base.at(c));
  }
}

TEST_CASE("cross-head gradients are exactly zero") {
  const std::size_t H = 4, dh = 3;
  ChannelLayerNorm<double> n(H, dh);
  randomize_affine(n, 6);
  Rng rng(7);
  auto x = random_tensor<double>(Shape{1, 1, H * dh}, rng);
  for (std::size_t i = 0; i < H; ++i) {
    x.zero_grad();
    std::vector<double> mask(H * dh, 0.0);
    for (std::size_t c = 0; c < dh; ++c) mask[i * dh + c] = rng.normal(0.0, 1.0);
    backward(sum(mul(n.forward(x), Tensord(Shape{1, 1, H * dh}, mask))));
    for (std::size_t j = 0; j < H; ++j) {
      if (j == i) continue;
      for (std::size_t c = 0; c < dh; ++c) CHECK(x.grad()[j * dh + c] == 0.0);
    }
  }
}

TEST_CASE("final LayerNorm is the single-head case") {
  LayerNorm<double> ln(8);
  randomize_affine(ln, 8);
  ChannelLayerNorm<double> one(1, 8);
  std::copy(ln.gamma().data().begin(), ln.gamma().data().end(), one.gamma().mutable_data().begin());
  std::copy(ln.beta().data().begin(), ln.beta().data().end(), one.beta().mutable_data().begin());
  Rng rng(9);
  const auto x = random_tensor<double>(Shape{2, 2, 8}, rng, 1.0, false);
  const auto a = ln.forward(x), b = one.forward(x);
  const auto want = oracle::cln(one, oracle::values(x), 4);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    CHECK(std::abs(a.at(i) - b.at(i)) < 1e-6);
    CHECK(std::abs(a.at(i) - want[i]) < 1e-9);
  }

  LayerNorm<double> fresh(4);
  const auto c = fresh.forward(Tensord(Shape{1, 1, 4}, 2.0));
  for (std::size_t i = 0; i < 4; ++i) CHECK(c.at(i) == 0.0);
  const auto s = fresh.forward(Tensord(Shape{1, 1, 4}, std::vector<double>{-1, 1, -1, 1}));
  CHECK(std::abs(s.at(0) + 1.0) < 1e-3);
}
