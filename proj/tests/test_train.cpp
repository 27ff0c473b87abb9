#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dstf/bpe.hpp"
#include "dstf/checkpoint.hpp"
#include "dstf/errors.hpp"
#include "dstf/mixing.hpp"
#include "dstf/ops.hpp"
#include "dstf/optim.hpp"
#include "dstf/trainer.hpp"
#include "support/helpers.hpp"

using namespace dstf;
namespace fs = std::filesystem;

namespace {

ModelConfig toy_model(std::uint64_t seed = 0) {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 32;
  c.vocab_size = BpeTokenizer::kBaseVocab;
  c.max_seq_len = 16;
  c.signature = parse_signature("kron-kron/dns-dns");
  c.seed = seed;
  return c;
}

Corpus toy_corpus() {
  Corpus c;
  for (int i = 0; i < 24; ++i) c.documents.push_back("the cat number " + std::to_string(i) + " sat on the mat.\n");
  return c;
}

TrainSettings toy_settings(std::size_t steps) {
  TrainSettings s;
  s.steps = steps;
  s.batch_size = 4;
  s.seq_len = 16;
  s.schedule.base_lr = 3e-3;
  s.schedule.floor_lr = 3e-4;
  s.schedule.warmup = 2;
  s.eval_batch_size = 8;
  s.checkpoint_every = 500;
  return s;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dstf_test_" + name);
  fs::remove_all(p);
  return p;
}

NamedParameter<double> scalar_param(double value, double grad, ParamKind kind = ParamKind::Weight) {
  Tensord t(Shape{1}, std::vector<double>{value});
  t.set_requires_grad();
  if (grad != 0.0) backward(scale(sum(t), grad));
  return {"p", t, kind, "-"};
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  const Schedule s{3e-4, 3e-5, 1000, 10000};
  CHECK(lr_at(s, 0) == 0.0);
  CHECK(lr_at(s, 500) == doctest::Approx(1.5e-4).epsilon(1e-15));
  CHECK(lr_at(s, 1000) == doctest::Approx(3e-4).epsilon(1e-15));
  CHECK(lr_at(s, 10000) == doctest::Approx(3e-5).epsilon(1e-15));
  CHECK(lr_at(s, 5500) == doctest::Approx(1.65e-4).epsilon(1e-12));
  CHECK(lr_at(s, 20000) == 3e-5);
  double prev = lr_at(s, 1000);
  for (std::size_t k = 1001; k <= 10000; k += 7) {
    const double lr = lr_at(s, k);
    CHECK(lr <= prev);
    CHECK(lr >= 3e-5);
    CHECK(lr <= 3e-4);
    prev = lr;
  }
  // continuity at the warmup boundary
  CHECK(std::abs(lr_at(s, 999) - lr_at(s, 1000)) < 1e-6);
}

TEST_CASE("gradient clipping") {
  Tensord a(Shape{2}, std::vector<double>{0, 0});
  a.set_requires_grad();
  backward(sum(mul(a, Tensord(Shape{2}, std::vector<double>{3, 4}))));
  ParameterList<double> one = {{"a", a, ParamKind::Weight, "-"}};
  CHECK(global_grad_norm(one) == 5.0);
  CHECK(clip_global_norm(one, 1.0) == doctest::Approx(0.2));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(a.grad()[1] == doctest::Approx(0.8));

  Tensord b(Shape{1}, 0.0);
  b.set_requires_grad();
  backward(scale(sum(b), 0.5));
  ParameterList<double> small = {{"b", b, ParamKind::Weight, "-"}};
  CHECK(clip_global_norm(small, 1.0) == 1.0);
  CHECK(b.grad()[0] == 0.5);

  // several tensors against one concatenated vector
  Rng rng(1);
  ParameterList<double> many;
  std::vector<double> flat;
  for (std::size_t n : {3u, 7u, 1u, 12u}) {
    auto t = testing::random_tensor<double>(Shape{n}, rng);
    const auto w = testing::random_tensor<double>(Shape{n}, rng, 2.0, false);
    backward(sum(mul(t, w)));
    flat.insert(flat.end(), w.data().begin(), w.data().end());
    many.push_back({"t" + std::to_string(n), t, ParamKind::Weight, "-"});
  }
  double sq = 0.0;
  for (double g : flat) sq += g * g;
  const double norm = std::sqrt(sq);
  CHECK(global_grad_norm(many) == doctest::Approx(norm).epsilon(1e-14));
  CHECK(clip_global_norm(many, 1.0) == doctest::Approx(1.0 / norm).epsilon(1e-14));
  std::size_t k = 0;
  for (const auto& p : many)
    for (double g : p.tensor.grad()) CHECK(g == doctest::Approx(flat[k++] / norm).epsilon(1e-14));
}

TEST_CASE("adamw single steps") {
  {
    auto p = scalar_param(1.0, 1.0);
    AdamW<double> opt({p}, {0.9, 0.95, 1e-8, 0.0});
    opt.step(0.1);
    CHECK(p.tensor.at(0) == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(std::abs(p.tensor.at(0) - 0.9) < 1e-8);
  }
  {
    auto p = scalar_param(2.5, 0.0);
    AdamW<double> opt({p}, {0.9, 0.95, 1e-8, 0.0});
    opt.step(0.1);
    CHECK(p.tensor.at(0) == 2.5);
  }
  {
    auto p = scalar_param(2.0, 0.0);
    AdamW<double> opt({p}, {0.9, 0.95, 1e-8, 0.1});
    opt.step(0.1);
    CHECK(p.tensor.at(0) == doctest::Approx(2.0 * (1.0 - 0.01)).epsilon(1e-15));
  }
  {
    // embeddings, norms and biases are not decayed
    for (auto kind : {ParamKind::Embedding, ParamKind::Norm, ParamKind::Bias}) {
      auto p = scalar_param(2.0, 0.0, kind);
      AdamW<double> opt({p}, {0.9, 0.95, 1e-8, 0.1});
      opt.step(0.1);
      CHECK(p.tensor.at(0) == 2.0);
    }
  }
}

TEST_CASE("adamw against a scalar recurrence") {
  const double b1 = 0.9, b2 = 0.95, eps = 1e-8, wd = 0.0;
  auto p = scalar_param(0.7, 0.0);
  AdamW<double> opt({p}, {b1, b2, eps, wd});
  double theta = 0.7, m = 0.0, v = 0.0;
  Rng rng(3);
  for (int t = 1; t <= 25; ++t) {
    const double g = rng.normal(0.0, 1.0);
    const double lr = 0.01 * (1.0 + 0.1 * t);
    p.tensor.zero_grad();
    backward(scale(sum(p.tensor), g));
    opt.step(lr);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    theta -= lr * mh / (std::sqrt(vh) + eps);
    CHECK(std::abs(p.tensor.at(0) - theta) < 1e-10);
  }
  CHECK(opt.steps() == 25);
}

TEST_CASE("kronecker weights move only with a gradient") {
  MixingLinear<double> layer(MixingStrategy::Kronecker, 3, 2, 2);
  layer.init(4, "m", 0.02);
  const auto before = export_kronecker(layer);
  ParameterList<double> params;
  layer.collect_parameters("m", params);
  AdamW<double> opt(params, {0.9, 0.95, 1e-8, 0.0});
  opt.step(0.01);
  CHECK(export_kronecker(layer) == before);

  Rng rng(5);
  const auto x = testing::random_tensor<double>(Shape{1, 2, 6}, rng, 1.0, false);
  backward(sum(mul(layer.apply(x), x)));
  opt.step(0.01);
  const auto after = export_kronecker(layer);
  const auto g = layer.weight().grad();
  for (std::size_t i = 0; i < after.size(); ++i) CHECK((after[i] != before[i]) == (g[i] != 0.0));
}

TEST_CASE("one step writes one metrics line and one checkpoint") {
  const auto dir = scratch("one_step");
  const BpeTokenizer bytes;
  const Dataset data(toy_corpus(), bytes, 16);
  DualStreamModel<float> model(toy_model());
  const auto result = train_loop(model, data, data, toy_settings(1), dir, {{"note", "x"}});
  CHECK(result.records.size() == 1);
  REQUIRE(result.checkpoints.size() == 1);
  CHECK(fs::exists(result.checkpoints[0]));

  std::ifstream in(dir / "metrics.jsonl");
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0].at("config").at("note") == "x");
  for (const char* key : {"step", "loss", "lr", "grad_norm", "tokens_per_s", "val_loss"}) CHECK(lines[1].contains(key));
  CHECK(lines[1]["step"] == 1);

  std::size_t ckpts = 0;
  for (const auto& e : fs::directory_iterator(dir)) ckpts += e.path().extension() == ".dstf";
  CHECK(ckpts == 1);
  fs::remove_all(dir);
}

TEST_CASE("training is reproducible") {
  const BpeTokenizer bytes;
  const auto [tc, vc] = split_corpus(toy_corpus(), 0.2);
  const Dataset train(tc, bytes, 16), val(vc, bytes, 16);
  auto settings = toy_settings(12);
  settings.eval_every = 4;
  DualStreamModel<float> a(toy_model(3)), b(toy_model(3));
  const auto ra = train_loop(a, train, val, settings, {});
  const auto rb = train_loop(b, train, val, settings, {});
  REQUIRE(ra.records.size() == rb.records.size());
  for (std::size_t i = 0; i < ra.records.size(); ++i) {
    CHECK(ra.records[i].loss == rb.records[i].loss);
    CHECK(ra.records[i].grad_norm == rb.records[i].grad_norm);
    CHECK(ra.records[i].val_loss == rb.records[i].val_loss);
  }
  CHECK(ra.records[3].val_loss.has_value());
  CHECK_FALSE(ra.records[4].val_loss.has_value());
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
  }

  settings.seed = 1;
  DualStreamModel<float> c(toy_model(3));
  CHECK(train_loop(c, train, val, settings, {}).records[0].loss != ra.records[0].loss);
}

TEST_CASE("overfitting a single batch") {
  const BpeTokenizer bytes;
  const Dataset one(Corpus{{"a small sentence to memorize"}}, bytes, 16);
  REQUIRE(one.size() == 2);
  const Dataset batch(Corpus{{"a small sentence"}}, bytes, 16);
  REQUIRE(batch.size() == 1);
  auto settings = toy_settings(200);
  settings.batch_size = 1;
  settings.schedule.base_lr = 1e-2;
  settings.schedule.floor_lr = 1e-3;
  settings.schedule.warmup = 0;
  settings.adam.weight_decay = 0.0;
  DualStreamModel<float> model(toy_model(5));
  std::vector<double> losses;
  TrainHooks hooks;
  hooks.on_record = [&](const StepRecord& r) { losses.push_back(r.loss); };
  const auto result = train_loop(model, batch, batch, settings, {}, {}, hooks);
  for (std::size_t i = 1; i < 20; ++i) CHECK(losses[i] < losses[i - 1]);
  CHECK(result.final_val_loss < 0.1 * losses.front());
}

TEST_CASE("settings validation and serialization") {
  auto s = toy_settings(10);
  s.batch_size = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = toy_settings(10);
  s.grad_clip = -1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = toy_settings(10);
  s.eval_every = 3;
  const auto back = TrainSettings::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());

  const BpeTokenizer bytes;
  const Dataset data(toy_corpus(), bytes, 8);
  DualStreamModel<float> model(toy_model());
  CHECK_THROWS_AS(train_loop(model, data, data, toy_settings(1), {}), ConfigError);
}
