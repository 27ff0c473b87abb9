#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dstf/bpe.hpp"
#include "dstf/checkpoint.hpp"
#include "dstf/diag.hpp"
#include "dstf/errors.hpp"

using namespace dstf;
namespace fs = std::filesystem;

namespace {

ModelConfig cfg(const char* sig = "kron-kron/ind-ind", bool gated = true) {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_ff = 32;
  c.vocab_size = BpeTokenizer::kBaseVocab;
  c.max_seq_len = 8;
  c.signature = parse_signature(sig);
  c.gated = gated;
  c.seed = 3;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) { return fs::temp_directory_path() / ("dstf_ckpt_" + name); }

}  // namespace

TEST_CASE("layout starts with magic and version") {
  DualStreamModel<float> m(cfg());
  std::ostringstream os;
  write_checkpoint(os, make_checkpoint(m, {{"step", 7}}));
  const auto bytes = os.str();
  REQUIRE(bytes.size() > 12);
  CHECK(bytes.substr(0, 4) == "DSTF");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 0);

  std::istringstream is(bytes);
  const auto back = read_checkpoint(is);
  CHECK(back.meta.at("step") == 7);
  CHECK(ModelConfig::from_json(back.meta.at("model")).to_json() == m.config().to_json());
  const auto params = m.parameters();
  REQUIRE(back.tensors.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(back.tensors[i].name == params[i].name);
    CHECK(back.tensors[i].shape == params[i].tensor.shape());
  }
}

TEST_CASE("save, load, evaluate, save again") {
  const auto a = scratch("a.dstf"), b = scratch("b.dstf");
  DualStreamModel<float> m(cfg());
  save_checkpoint(a, m, {{"run", "x"}});
  const auto loaded = model_from_checkpoint<float>(load_checkpoint(a));
  save_checkpoint(b, loaded, {{"run", "x"}});
  CHECK(slurp(a) == slurp(b));
  CHECK(checkpoint_hash(a) == checkpoint_hash(b));
  CHECK(checkpoint_hash(a).size() == 16);

  Corpus c{{"checkpoint round trips should be exact", "second document"}};
  const Dataset data(c, BpeTokenizer(), 8);
  CHECK(eval_loss(m, data) == eval_loss(loaded, data));
  fs::remove(a);
  fs::remove(b);
}

TEST_CASE("every signature and mode survives a round trip") {
  for (const char* sig : {"dns-dns/dns-dns", "id-kron/ind-dns", "ind-ind/ind-ind"}) {
    auto c = cfg(sig, false);
    c.stream_mode = StreamMode::FrozenTokenStream;
    c.tie_embeddings = true;
    DualStreamModel<float> m(c);
    std::stringstream ss;
    write_checkpoint(ss, make_checkpoint(m));
    const auto back = model_from_checkpoint<double>(read_checkpoint(ss));
    const auto p = m.parameters();
    const auto q = back.parameters();
    REQUIRE(p.size() == q.size());
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < p[i].tensor.numel(); ++j) CHECK(q[i].tensor.at(j) == p[i].tensor.at(j));
  }
}

TEST_CASE("corrupt files are rejected") {
  DualStreamModel<float> m(cfg());
  std::ostringstream os;
  write_checkpoint(os, make_checkpoint(m));
  const std::string good = os.str();

  auto reject = [](std::string bytes, const char* what) {
    std::istringstream is(bytes);
    CHECK_THROWS_WITH_AS(read_checkpoint(is), doctest::Contains(what), DataError);
  };
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  reject(bad_magic, "magic");
  std::string bad_version = good;
  bad_version[4] = 2;
  reject(bad_version, "version");
  reject(good.substr(0, good.size() - 3), "");
  reject(good + "junk", "");

  auto data = make_checkpoint(m);
  data.tensors.pop_back();
  CHECK_THROWS_AS(model_from_checkpoint<float>(data), DataError);
  data = make_checkpoint(m);
  data.tensors[0].shape = Shape{1, 1};
  data.tensors[0].data = {0.0f};
  CHECK_THROWS_AS(model_from_checkpoint<float>(data), DataError);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.dstf"), DataError);
}
