#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dstf/errors.hpp"
#include "dstf/mixing.hpp"
#include "dstf/ops.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace dstf;
using testing::random_tensor;

namespace {

double max_abs_diff(const oracle::Vec& a, const oracle::Vec& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("param_count table values") {
  CHECK(param_count(MixingStrategy::Identity, 8, 64, 64) == 0);
  CHECK(param_count(MixingStrategy::Independent, 8, 64, 64) == 32768);
  CHECK(param_count(MixingStrategy::Kronecker, 8, 64, 64) == 64);
  CHECK(param_count(MixingStrategy::Dense, 8, 64, 64) == 262144);
}

TEST_CASE("param_count equals allocated scalars") {
  for (auto s : {MixingStrategy::Identity, MixingStrategy::Independent, MixingStrategy::Kronecker,
                 MixingStrategy::Dense}) {
    for (std::size_t H : {1u, 2u, 4u})
      for (std::size_t d : {1u, 3u, 8u}) {
        MixingLinear<float> layer(s, H, d, d);
        CHECK(layer.allocated_params() == param_count(s, H, d, d));
      }
  }
  MixingLinear<float> rect(MixingStrategy::Independent, 4, 2, 5);
  CHECK(rect.allocated_params() == param_count(MixingStrategy::Independent, 4, 2, 5));
  CHECK_THROWS_AS(MixingLinear<float>(MixingStrategy::Kronecker, 4, 2, 5), ConfigError);
  CHECK_THROWS_AS(MixingLinear<float>(MixingStrategy::Identity, 4, 2, 5), ConfigError);
}

TEST_CASE("signature parsing") {
  const auto rec = parse_signature("kron-kron/dns-dns");
  CHECK(rec.attn_v == MixingStrategy::Kronecker);
  CHECK(rec.attn_o == MixingStrategy::Kronecker);
  CHECK(rec.ffn_up == MixingStrategy::Dense);
  CHECK(rec.ffn_down == MixingStrategy::Dense);

  const auto ind = parse_signature("ind-ind/ind-ind");
  CHECK(ind == MixingSignature{MixingStrategy::Independent, MixingStrategy::Independent, MixingStrategy::Independent,
                               MixingStrategy::Independent});

  for (const char* s : {"dns-dns/dns-dns", "id-kron/ind-dns", "kron-kron/dns-dns", "ind-ind/ind-ind"}) {
    CHECK(format_signature(parse_signature(s)) == s);
  }

  CHECK_THROWS_WITH_AS(parse_signature("kron-foo/dns-dns"), doctest::Contains("position 5"), ConfigError);
  CHECK_THROWS_AS(parse_signature("kron-kron/dns"), ConfigError);
  CHECK_THROWS_AS(parse_signature("kron/kron/dns-dns"), ConfigError);
  CHECK_THROWS_AS(parse_signature("kron-kron/dns-dns-dns"), ConfigError);
  CHECK_THROWS_AS(parse_signature(""), ConfigError);
}

TEST_CASE("identity cases") {
  Rng rng(1);
  const auto x = random_tensor<float>(Shape{2, 3, 8}, rng, 1.0, false);
  MixingLinear<float> id(MixingStrategy::Identity, 4, 2, 2);
  auto y = id.apply(x);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));

  MixingLinear<float> kron(MixingStrategy::Kronecker, 4, 2, 2);
  auto w = kron.weight().mutable_data();
  std::fill(w.begin(), w.end(), 0.0f);
  for (std::size_t h = 0; h < 4; ++h) w[h * 4 + h] = 1.0f;
  y = kron.apply(x);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("apply accepts split [.., H, d] input") {
  Rng rng(2);
  MixingLinear<float> layer(MixingStrategy::Independent, 2, 3, 4);
  layer.init(7, "m", 0.5);
  const auto x = random_tensor<float>(Shape{2, 5, 6}, rng, 1.0, false);
  const auto flat = layer.apply(x);
  const auto split = layer.apply(reshape(x, Shape{2, 5, 2, 3}));
  CHECK(split.shape() == Shape{2, 5, 2, 4});
  for (std::size_t i = 0; i < flat.numel(); ++i) CHECK(split.at(i) == flat.at(i));
  CHECK_THROWS_AS(layer.apply(Tensorf(Shape{2, 5, 7})), DimensionError);
}

TEST_CASE("structured strategies equal their dense expansion") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (auto s : {MixingStrategy::Independent, MixingStrategy::Kronecker}) {
      for (std::size_t H : {2u, 4u})
        for (std::size_t d : {2u, 8u}) {
          MixingLinear<float> layer(s, H, d, d);
          layer.init(seed, "mix", 0.5);
          Rng rng(seed + 1000);
          const auto x = random_tensor<float>(Shape{2, 3, H * d}, rng, 1.0, false);
          const auto full = oracle::expand(s, oracle::values(layer.weight()), H, d, d);
          const auto want = oracle::matmul(oracle::values(x), full, 6, H * d, H * d);
          CHECK(max_abs_diff(oracle::values(layer.apply(x)), want) < 1e-5);
          CHECK(max_abs_diff(oracle::mix(layer, oracle::values(x), 6), want) < 1e-9);
        }
    }
  }
}

TEST_CASE("bias is added per output channel") {
  MixingLinear<double> layer(MixingStrategy::Kronecker, 2, 3, 3, true);
  layer.init(3, "m", 0.3);
  auto b = layer.bias().mutable_data();
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.1 * static_cast<double>(i);
  Rng rng(4);
  const auto x = random_tensor<double>(Shape{1, 2, 6}, rng, 1.0, false);
  CHECK(max_abs_diff(oracle::values(layer.apply(x)), oracle::mix(layer, oracle::values(x), 2)) < 1e-12);
}

TEST_CASE("independent mixing isolates heads") {
  MixingLinear<double> layer(MixingStrategy::Independent, 4, 3, 3);
  layer.init(5, "m", 0.5);
  Rng rng(6);
  auto x = random_tensor<double>(Shape{1, 2, 12}, rng);
  const auto y = layer.apply(x);
  const std::size_t H = 4, d = 3;
  for (std::size_t i = 0; i < H; ++i) {
    x.zero_grad();
    // d(sum of head i output)/dx is nonzero only inside head i.
    std::vector<double> mask(y.numel(), 0.0);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < d; ++c) mask[r * H * d + i * d + c] = 1.0;
    backward(sum(mul(layer.apply(x), Tensord(y.shape(), mask))));
    const auto g = x.grad();
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t j = 0; j < H; ++j)
        for (std::size_t c = 0; c < d; ++c) {
          const double v = g[r * H * d + j * d + c];
          if (j != i) CHECK(v == 0.0);
        }
  }

  // Perturbing another head leaves head 0's output bit-identical.
  NoGradGuard no_grad;
  auto x2 = Tensord(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
  for (std::size_t c = 3; c < 12; ++c) x2.mutable_data()[c] += 1.0;
  const auto a = layer.apply(x), b = layer.apply(x2);
  for (std::size_t c = 0; c < 3; ++c) CHECK(a.at(c) == b.at(c));
}

TEST_CASE("kronecker commutes with within-head permutations") {
  const std::size_t H = 3, d = 4;
  MixingLinear<double> layer(MixingStrategy::Kronecker, H, d, d);
  layer.init(8, "m", 0.5);
  Rng rng(9);
  const auto x = random_tensor<double>(Shape{1, 1, H * d}, rng, 1.0, false);
  const std::size_t perm[4] = {2, 0, 3, 1};
  std::vector<double> px(H * d);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t i = 0; i < d; ++i) px[h * d + i] = x.at(h * d + perm[i]);
  const auto y = layer.apply(x);
  const auto py = layer.apply(Tensord(x.shape(), px));
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t i = 0; i < d; ++i) CHECK(py.at(h * d + i) == doctest::Approx(y.at(h * d + perm[i])).epsilon(1e-14));
}

TEST_CASE("kronecker export and import") {
  MixingLinear<float> layer(MixingStrategy::Kronecker, 4, 2, 2);
  layer.init(10, "m", 0.02);
  const auto exported = export_kronecker(layer);
  const auto w = layer.weight().data();
  REQUIRE(exported.size() == 16);
  for (std::size_t i = 0; i < 16; ++i) CHECK(exported[i] == static_cast<double>(w[i]));
  // identity plus small noise
  for (std::size_t h = 0; h < 4; ++h) CHECK(std::abs(exported[h * 4 + h] - 1.0) < 0.2);

  MixingLinear<float> fresh(MixingStrategy::Kronecker, 4, 2, 2);
  import_kronecker(fresh, exported);
  Rng rng(11);
  const auto x = random_tensor<float>(Shape{2, 3, 8}, rng, 1.0, false);
  const auto a = layer.apply(x), b = fresh.apply(x);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));

  MixingLinear<float> dense(MixingStrategy::Dense, 4, 2, 2);
  CHECK_THROWS_AS(export_kronecker(dense), UsageError);
  CHECK_THROWS_AS(import_kronecker(fresh, std::vector<double>(15)), DimensionError);
}

TEST_CASE("routing csv round trip") {
  const std::vector<double> m = {1.0, -0.25, 0.5, 1e-7};
  std::ostringstream os;
  write_routing_csv(os, m, 2, "signature=kron-kron/dns-dns");
  const std::string text = os.str();
  CHECK(text.rfind("# signature=kron-kron/dns-dns\ndst\\src,h0,h1\nh0,", 0) == 0);
  std::istringstream is(text);
  std::size_t heads = 0;
  const auto back = read_routing_csv(is, heads);
  CHECK(heads == 2);
  CHECK(back == m);
}
