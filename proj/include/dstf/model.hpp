#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dstf/attention.hpp"
#include "dstf/config.hpp"
#include "dstf/ffn.hpp"
#include "dstf/norm.hpp"
#include "dstf/parameter.hpp"
#include "dstf/tensor.hpp"

namespace dstf {

enum class AblationTarget { TokenStream, ContextStream };
enum class AblationMode { Zero, RandomVocab };
enum class AblationScope { EveryLayer, FinalOnly };

// Inference-time corruption of one stream. RandomVocab replaces x_t with the
// embeddings of uniformly sampled token ids and is only defined for the token stream.
struct AblationSpec {
  AblationTarget target = AblationTarget::TokenStream;
  AblationMode mode = AblationMode::Zero;
  AblationScope scope = AblationScope::EveryLayer;
  std::uint64_t seed = 0;

  void validate() const;
  std::string label() const;  // "x_t->0", "x_e->0", "x_t->random_vocab"
};

template <typename Real>
struct StreamState {
  Tensor<Real> x_t;  // token stream [B, T, D]
  Tensor<Real> x_e;  // context stream [B, T, D]
};

template <typename Real>
struct LayerTrace {
  StreamState<Real> input;
  Tensor<Real> x_t_mid;  // token stream after the attention sub-step
  StreamState<Real> output;
  AttentionOutput<Real> attention;
  Tensor<Real> logits;  // intermediate LM-head logits when requested
};

template <typename Real>
struct ForwardTrace {
  StreamState<Real> embedding;  // (Embed(tokens), 0)
  std::vector<LayerTrace<Real>> layers;
};

struct ForwardOptions {
  double alpha = 1.0;
  std::optional<AblationSpec> ablation;
  bool layer_logits = false;  // project every intermediate combined stream through the LM head
};

template <typename Real>
struct ForwardResult {
  Tensor<Real> logits;  // [B, T, V]
  ForwardTrace<Real> trace;
};

template <typename Real>
struct LossBreakdown {
  Tensor<Real> total;
  Tensor<Real> final_loss;
  std::vector<Tensor<Real>> layer_losses;  // l = 1 .. L-1 when supervision is on
  std::vector<double> layer_weights;
};

struct CensusRow {
  std::string name;
  Shape shape;
  std::size_t count = 0;
  std::string strategy;
};

struct Census {
  std::vector<CensusRow> rows;
  std::size_t total = 0;
};

template <typename Real>
class DualStreamModel {
 public:
  explicit DualStreamModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  // Tokens [B, T] -> logits [B, T, V]. alpha != 1 is inference-only and
  // requires grad mode to be off.
  ForwardResult<Real> forward(const TokenIds& tokens, const ForwardOptions& options = {}) const;

  // Final cross-entropy plus lambda * sum_l w_l * CE_l when supervision is enabled.
  Tensor<Real> loss(const TokenIds& tokens, const TokenIds& targets) const;
  LossBreakdown<Real> loss_breakdown(const TokenIds& tokens, const TokenIds& targets) const;

  // Autoregressive continuation of `prompt`; greedy when temperature == 0.
  std::vector<std::int32_t> generate(const std::vector<std::int32_t>& prompt, std::size_t n, double alpha = 1.0,
                                     double temperature = 0.0, std::uint64_t seed = 0) const;

  // Token plus position embedding: the initial token stream.
  Tensor<Real> embed(const TokenIds& tokens) const;
  // final LayerNorm followed by the LM head.
  Tensor<Real> project(const Tensor<Real>& combined) const;

  ParameterList<Real> parameters() const;
  void zero_grad();

  std::size_t n_layers() const { return attention_.size(); }
  const AttentionLayer<Real>& attention(std::size_t layer) const { return attention_.at(layer); }
  AttentionLayer<Real>& attention(std::size_t layer) { return attention_.at(layer); }
  const FfnLayer<Real>& ffn(std::size_t layer) const { return ffn_.at(layer); }
  FfnLayer<Real>& ffn(std::size_t layer) { return ffn_.at(layer); }
  const Tensor<Real>& token_embedding() const { return tok_emb_; }
  const Tensor<Real>& position_embedding() const { return pos_emb_; }
  const Tensor<Real>& lm_head() const { return lm_head_; }
  const LayerNorm<Real>& final_norm() const { return final_ln_; }

 private:
  void apply_ablation(StreamState<Real>& state, const AblationSpec& spec, const TokenIds& tokens) const;

  ModelConfig config_;
  Tensor<Real> tok_emb_;  // [V, D]
  Tensor<Real> pos_emb_;  // [T_max, D]
  std::vector<AttentionLayer<Real>> attention_;
  std::vector<FfnLayer<Real>> ffn_;
  LayerNorm<Real> final_ln_;
  Tensor<Real> lm_head_;  // [D, V], undefined when tied to tok_emb_
};

template <typename Real>
Census param_census(const DualStreamModel<Real>& model);

// Copies every parameter value of `src` into `dst` (same config, any precision).
template <typename To, typename From>
void copy_parameters(const DualStreamModel<From>& src, DualStreamModel<To>& dst);

}  // namespace dstf
