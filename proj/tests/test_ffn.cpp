#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dstf/errors.hpp"
#include "dstf/ffn.hpp"
#include "dstf/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace dstf;
using testing::random_tensor;

TEST_CASE("construction checks") {
  CHECK_THROWS_AS(FfnLayer<float>(10, 4, 16, MixingStrategy::Dense, MixingStrategy::Dense), ConfigError);
  CHECK_THROWS_AS(FfnLayer<float>(8, 4, 18, MixingStrategy::Independent, MixingStrategy::Dense), ConfigError);
  CHECK_THROWS_AS(FfnLayer<float>(8, 4, 16, MixingStrategy::Kronecker, MixingStrategy::Kronecker), ConfigError);
  FfnLayer<float> dense(8, 4, 18, MixingStrategy::Dense, MixingStrategy::Dense);
  CHECK(dense.up_mix().output_width() == 18);
  FfnLayer<float> ind(8, 4, 32, MixingStrategy::Independent, MixingStrategy::Independent);
  CHECK(ind.up_mix().d_out() == 8);
  // H*(d_h*(d_ff/H)) + H*((d_ff/H)*d_h)
  CHECK(ind.up_mix().allocated_params() + ind.down_mix().allocated_params() == 4 * (2 * 8) + 4 * (8 * 2));
}

TEST_CASE("zero down projection gives zero delta") {
  FfnLayer<double> ffn(8, 2, 16, MixingStrategy::Independent, MixingStrategy::Dense);
  ffn.init(1, "ffn", 0.5);
  for (auto& w : ffn.down_mix().weight().mutable_data()) w = 0.0;
  Rng rng(2);
  const auto out = ffn.forward(random_tensor<double>(Shape{2, 3, 8}, rng, 1.0, false),
                               random_tensor<double>(Shape{2, 3, 8}, rng, 1.0, false));
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("dense ffn is a plain two-layer MLP") {
  FfnLayer<double> ffn(8, 2, 12, MixingStrategy::Dense, MixingStrategy::Dense);
  ffn.init(3, "ffn", 0.4);
  Rng rng(4);
  const auto xt = random_tensor<double>(Shape{1, 5, 8}, rng, 1.0, false);
  const auto xe = random_tensor<double>(Shape{1, 5, 8}, rng, 1.0, false);
  oracle::Vec combined = oracle::values(add(xt, xe));
  const auto normed = oracle::cln(ffn.cln(), combined, 5);
  auto hidden = oracle::matmul(normed, oracle::values(ffn.up_mix().weight()), 5, 8, 12);
  for (auto& h : hidden) h = oracle::gelu(h);
  const auto want = oracle::matmul(hidden, oracle::values(ffn.down_mix().weight()), 5, 12, 8);
  const auto got = ffn.forward(xt, xe);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.at(i) - want[i]) < 1e-6);
}

TEST_CASE("independent ffn keeps heads isolated") {
  const std::size_t H = 4, dh = 2;
  FfnLayer<double> ffn(H * dh, H, 16, MixingStrategy::Independent, MixingStrategy::Independent);
  ffn.init(5, "ffn", 0.5);
  Rng rng(6);
  auto xt = random_tensor<double>(Shape{1, 2, H * dh}, rng);
  auto xe = random_tensor<double>(Shape{1, 2, H * dh}, rng);
  for (std::size_t i = 0; i < H; ++i) {
    xt.zero_grad();
    xe.zero_grad();
    std::vector<double> mask(2 * H * dh, 0.0);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < dh; ++c) mask[r * H * dh + i * dh + c] = 1.0;
    backward(sum(mul(ffn.forward(xt, xe), Tensord(Shape{1, 2, H * dh}, mask))));
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t j = 0; j < H; ++j) {
        if (j == i) continue;
        for (std::size_t c = 0; c < dh; ++c) {
          CHECK(xt.grad()[r * H * dh + j * dh + c] == 0.0);
          CHECK(xe.grad()[r * H * dh + j * dh + c] == 0.0);
        }
      }
  }
}

TEST_CASE("finite differences through ffn") {
  for (auto s : {MixingStrategy::Independent, MixingStrategy::Kronecker, MixingStrategy::Dense}) {
    // Kronecker keeps the per-head width, so it needs d_ff == D.
    const std::size_t d_ff = s == MixingStrategy::Kronecker ? 4 : 8;
    FfnLayer<double> ffn(4, 2, d_ff, s, s);
    ffn.init(7, "ffn", 0.5);
    Rng rng(8);
    auto xt = random_tensor<double>(Shape{1, 3, 4}, rng);
    auto xe = random_tensor<double>(Shape{1, 3, 4}, rng);
    const auto w = random_tensor<double>(Shape{1, 3, 4}, rng, 1.0, false);
    std::vector<std::pair<std::string, Tensord>> leaves = {{"x_t", xt}, {"x_e", xe}, {"gamma", ffn.cln().gamma()},
                                                           {"down", ffn.down_mix().weight()}};
    if (ffn.up_mix().weight().defined()) leaves.push_back({"up", ffn.up_mix().weight()});
    const auto r = testing::check_gradients([&] { return sum(mul(ffn.forward(xt, xe), w)); }, leaves);
    CAPTURE(r.worst);
    CHECK(r.max_rel_error < 1e-4);
  }
}
