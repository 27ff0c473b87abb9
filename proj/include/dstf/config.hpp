#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dstf/mixing.hpp"

namespace dstf {

enum class StreamMode { SingleStream, TokenFactor, FrozenTokenStream };

std::string_view stream_mode_token(StreamMode m);  // "ss", "tf", "fts"
std::string_view stream_mode_name(StreamMode m);
// Accepts the short tokens and the long names (single-stream, token-factor, frozen-token-stream).
StreamMode parse_stream_mode(std::string_view text);

enum class SupervisionSchedule { Uniform, Linear, Exponential };

std::string_view schedule_token(SupervisionSchedule s);
SupervisionSchedule parse_schedule(std::string_view text);

// Auxiliary per-layer cross-entropy on intermediate combined streams.
struct SupervisionConfig {
  bool enabled = false;
  double lambda = 0.1;
  SupervisionSchedule schedule = SupervisionSchedule::Linear;
};

// Weights w_l for l = 1 .. L-1 (index 0 holds w_1):
// uniform 1, linear l/L, exponential 2^(l-L+1).
std::vector<double> supervision_weights(SupervisionSchedule schedule, std::size_t n_layers);

struct ModelConfig {
  std::size_t d_model = 512;
  std::size_t n_layers = 6;
  std::size_t n_heads = 8;
  std::size_t d_ff = 2048;
  std::size_t vocab_size = 32000;
  std::size_t max_seq_len = 512;
  StreamMode stream_mode = StreamMode::TokenFactor;
  MixingSignature signature{};
  bool gated = false;
  SupervisionConfig supervision{};
  bool tie_embeddings = false;
  bool position_embedding = true;
  bool mixing_bias = false;
  double init_std = 0.02;
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return n_heads ? d_model / n_heads : 0; }
  // Throws ConfigError describing the first violated constraint.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

}  // namespace dstf
