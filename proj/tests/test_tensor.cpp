#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>

#include "dstf/errors.hpp"
#include "dstf/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/helpers.hpp"
#include "support/op_cases.hpp"

using namespace dstf;
using testing::check_gradients;
using testing::random_tensor;

constexpr double kOpTol = 1e-4;

TEST_CASE("tensor construction and shape checks") {
  Tensorf t(Shape{2, 3}, 1.5f);
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.at(5) == 1.5f);
  CHECK_THROWS_AS(Tensorf(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensorf(Shape{2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  CHECK(Tensorf::scalar(3.0f).item() == 3.0f);
}

TEST_CASE("matmul examples") {
  Tensord eye(Shape{3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(1);
  auto x = random_tensor<double>(Shape{3, 3}, rng, 1.0, false);
  auto y = matmul(eye, x);
  for (std::size_t i = 0; i < 9; ++i) CHECK(y.at(i) == x.at(i));

  Tensord a(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensord b(Shape{2, 1}, std::vector<double>{1, 0});
  auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.at(0) == 1.0);
  CHECK(c.at(1) == 3.0);

  CHECK_THROWS_AS(matmul(a, Tensord(Shape{3, 1})), DimensionError);
  CHECK_THROWS_WITH_AS(matmul(Tensord(Shape{2, 2, 3}), Tensord(Shape{3, 3, 4})), doctest::Contains("[2,2,3] and [3,3,4]"),
                       DimensionError);
}

TEST_CASE("softmax examples and properties") {
  auto s = softmax(Tensord(Shape{2}, std::vector<double>{0, 0}));
  CHECK(s.at(0) == doctest::Approx(0.5));
  CHECK(s.at(1) == doctest::Approx(0.5));

  for (double scale : {0.5, 1.0, 7.0, 16.0}) {
    auto u = softmax(Tensord(Shape{4}, 3.25), -1, scale);
    for (std::size_t i = 0; i < 4; ++i) CHECK(u.at(i) == 0.25);
  }

  auto sharp = softmax(Tensord(Shape{2}, std::vector<double>{1, 0}), -1, 16.0);
  CHECK(sharp.at(0) == doctest::Approx(std::exp(16.0) / (std::exp(16.0) + 1.0)).epsilon(1e-14));

  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> v(37);
    for (auto& x : v) x = static_cast<float>(rng.uniform() * 100.0 - 50.0);
    Tensorf x(Shape{37}, v);
    const float alpha = static_cast<float>(1.0 + rng.below(16));
    auto a = softmax(x, -1, alpha);
    auto b = softmax(scale(x, alpha), -1, 1.0f);
    double total = 0.0;
    for (std::size_t i = 0; i < 37; ++i) {
      CHECK(a.at(i) == b.at(i));
      CHECK(a.at(i) >= 0.0f);
      total += a.at(i);
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("elementwise and shape ops") {
  CHECK(gelu(Tensord::scalar(0.0)).item() == 0.0);
  CHECK(gelu(Tensord::scalar(1.0)).item() == doctest::Approx(0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)))));
  CHECK(sigmoid(Tensord::scalar(0.0)).item() == 0.5);

  Rng rng(3);
  auto x = random_tensor<float>(Shape{2, 5, 12}, rng, 1.0, false);
  for (std::size_t h : {1u, 2u, 3u, 4u, 6u, 12u}) {
    auto split = split_heads(x, h);
    CHECK(split.shape() == Shape{2, h, 5, 12 / h});
    auto back = merge_heads(split);
    REQUIRE(back.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back.at(i) == x.at(i));
  }
  CHECK_THROWS_AS(split_heads(x, 5), ConfigError);

  auto cat = concat<float>({Tensorf(Shape{2, 1}, 1.0f), Tensorf(Shape{2, 2}, 2.0f)}, -1);
  CHECK(cat.shape() == Shape{2, 3});
  CHECK(cat.at(0) == 1.0f);
  CHECK(cat.at(1) == 2.0f);
  CHECK(cat.at(3) == 1.0f);
}

TEST_CASE("cross entropy") {
  Tensord logits(Shape{1, 3, 4}, 0.0);
  TokenIds targets(Shape{1, 3}, {0, 3, 2});
  CHECK(cross_entropy(logits, targets).item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));

  TokenIds ignored(Shape{1, 3}, {0, kIgnoreIndex, 2});
  CHECK(cross_entropy(logits, ignored).item() == doctest::Approx(std::log(4.0)));

  CHECK_THROWS_AS(cross_entropy(logits, TokenIds(Shape{1, 3}, {0, 4, 1})), DataError);
  CHECK_THROWS_AS(embedding(TokenIds(Shape{1, 1}, {7}), Tensord(Shape{4, 2})), DataError);
}

TEST_CASE("backward basics") {
  Tensord x(Shape{3}, std::vector<double>{1, -2, 3});
  x.set_requires_grad();
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  x.zero_grad();
  backward(sum(mul(x, x)));
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == -4.0);
  CHECK(x.grad()[2] == 6.0);

  // Without zero_grad the next backward accumulates.
  backward(sum(x));
  CHECK(x.grad()[0] == 3.0);

  CHECK_THROWS_AS(backward(mul(x, x)), UsageError);
}

TEST_CASE("no-grad mode records nothing") {
  Tensord x(Shape{2}, 1.0);
  x.set_requires_grad();
  {
    NoGradGuard guard;
    auto y = sum(mul(x, x));
    CHECK_FALSE(y.requires_grad());
    CHECK_THROWS_AS(backward(y), UsageError);
  }
  CHECK(GradMode::enabled());
}

TEST_CASE("finite differences: every differentiable op") {
  for (const auto& cs : testing::op_gradient_cases()) {
    CAPTURE(cs.name);
    const auto r = check_gradients(cs.fn, cs.leaves);
    CAPTURE(r.worst);
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error < kOpTol);
  }
}

TEST_CASE("finite differences: randomized DAG") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    std::vector<Tensord> leaves;
    for (int i = 0; i < 3; ++i) leaves.push_back(random_tensor<double>(Shape{3, 4}, rng));
    const auto ops = std::vector<std::uint64_t>{rng.below(4), rng.below(4), rng.below(4), rng.below(4)};
    auto fn = [&] {
      std::vector<Tensord> nodes = leaves;
      for (std::size_t k = 0; k < ops.size(); ++k) {
        const auto& x = nodes[k % nodes.size()];
        const auto& y = nodes[(k * 2 + 1) % nodes.size()];
        switch (ops[k]) {
          case 0: nodes.push_back(add(x, y)); break;
          case 1: nodes.push_back(mul(x, y)); break;
          case 2: nodes.push_back(gelu(sub(x, y))); break;
          default: nodes.push_back(softmax(x, -1, 1.3)); break;
        }
      }
      Tensord total = sum(nodes.back());
      for (std::size_t k = leaves.size(); k + 1 < nodes.size(); ++k) total = add(total, mean(mul(nodes[k], nodes[k])));
      return total;
    };
    const auto r = check_gradients(fn, {{"l0", leaves[0]}, {"l1", leaves[1]}, {"l2", leaves[2]}});
    CAPTURE(seed);
    CAPTURE(r.worst);
    CHECK(r.max_rel_error < kOpTol);
  }
}
