#include "dstf/config.hpp"

#include <cmath>

#include "dstf/errors.hpp"

namespace dstf {

std::string_view stream_mode_token(StreamMode m) {
  switch (m) {
    case StreamMode::SingleStream: return "ss";
    case StreamMode::TokenFactor: return "tf";
    case StreamMode::FrozenTokenStream: return "fts";
  }
  return "?";
}

std::string_view stream_mode_name(StreamMode m) {
  switch (m) {
    case StreamMode::SingleStream: return "single-stream";
    case StreamMode::TokenFactor: return "token-factor";
    case StreamMode::FrozenTokenStream: return "frozen-token-stream";
  }
  return "?";
}

StreamMode parse_stream_mode(std::string_view text) {
  for (auto m : {StreamMode::SingleStream, StreamMode::TokenFactor, StreamMode::FrozenTokenStream}) {
    if (text == stream_mode_token(m) || text == stream_mode_name(m)) return m;
  }
  throw ConfigError("unknown stream mode '" + std::string(text) + "' (expected ss, tf or fts)");
}

std::string_view schedule_token(SupervisionSchedule s) {
  switch (s) {
    case SupervisionSchedule::Uniform: return "uniform";
    case SupervisionSchedule::Linear: return "linear";
    case SupervisionSchedule::Exponential: return "exponential";
  }
  return "?";
}

SupervisionSchedule parse_schedule(std::string_view text) {
  for (auto s : {SupervisionSchedule::Uniform, SupervisionSchedule::Linear, SupervisionSchedule::Exponential}) {
    if (text == schedule_token(s)) return s;
  }
  throw ConfigError("unknown supervision schedule '" + std::string(text) + "' (expected uniform, linear or exponential)");
}

std::vector<double> supervision_weights(SupervisionSchedule schedule, std::size_t n_layers) {
  std::vector<double> w;
  if (n_layers < 2) return w;
  const double L = static_cast<double>(n_layers);
  for (std::size_t l = 1; l < n_layers; ++l) {
    const double ell = static_cast<double>(l);
    switch (schedule) {
      case SupervisionSchedule::Uniform: w.push_back(1.0); break;
      case SupervisionSchedule::Linear: w.push_back(ell / L); break;
      case SupervisionSchedule::Exponential: w.push_back(std::exp2(ell - L + 1.0)); break;
    }
  }
  return w;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (d_model == 0 || n_heads == 0 || d_ff == 0 || vocab_size == 0 || max_seq_len == 0) {
    fail("dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    fail("D=" + std::to_string(d_model) + " is not divisible by H=" + std::to_string(n_heads));
  }
  const auto channelized = [](MixingStrategy s) { return s != MixingStrategy::Dense; };
  if ((channelized(signature.ffn_up) || channelized(signature.ffn_down)) && d_ff % n_heads != 0) {
    fail("d_ff=" + std::to_string(d_ff) + " must be divisible by H=" + std::to_string(n_heads) +
         " for channelized FFN mixing");
  }
  const std::size_t dh = head_dim();
  for (auto s : {signature.ffn_up, signature.ffn_down}) {
    if ((s == MixingStrategy::Identity || s == MixingStrategy::Kronecker) && d_ff / n_heads != dh) {
      fail(std::string(strategy_name(s)) + " FFN mixing needs d_ff/H == d_h (d_ff=" + std::to_string(d_ff) +
           ", D=" + std::to_string(d_model) + ")");
    }
  }
  if (supervision.lambda < 0.0) fail("supervision lambda must be >= 0");
  if (!(init_std >= 0.0)) fail("init_std must be >= 0");
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j;
  j["d_model"] = d_model;
  j["n_layers"] = n_layers;
  j["n_heads"] = n_heads;
  j["d_ff"] = d_ff;
  j["vocab_size"] = vocab_size;
  j["max_seq_len"] = max_seq_len;
  j["stream_mode"] = std::string(stream_mode_token(stream_mode));
  j["mixing"] = format_signature(signature);
  j["gated"] = gated;
  j["supervision"] = {{"enabled", supervision.enabled},
                      {"lambda", supervision.lambda},
                      {"schedule", std::string(schedule_token(supervision.schedule))}};
  j["tie_embeddings"] = tie_embeddings;
  j["position_embedding"] = position_embedding;
  j["mixing_bias"] = mixing_bias;
  j["init_std"] = init_std;
  j["seed"] = seed;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    c.stream_mode = parse_stream_mode(j.at("stream_mode").get<std::string>());
    c.signature = parse_signature(j.at("mixing").get<std::string>());
    c.gated = j.value("gated", false);
    if (j.contains("supervision")) {
      const auto& s = j.at("supervision");
      c.supervision.enabled = s.value("enabled", false);
      c.supervision.lambda = s.value("lambda", 0.1);
      c.supervision.schedule = parse_schedule(s.value("schedule", std::string("linear")));
    }
    c.tie_embeddings = j.value("tie_embeddings", false);
    c.position_embedding = j.value("position_embedding", true);
    c.mixing_bias = j.value("mixing_bias", false);
    c.init_std = j.value("init_std", 0.02);
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config json: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace dstf
