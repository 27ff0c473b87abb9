#include "dstf/model.hpp"

#include <algorithm>
#include <cmath>

#include "dstf/errors.hpp"
#include "dstf/ops.hpp"
#include "dstf/rng.hpp"

namespace dstf {

void AblationSpec::validate() const {
  if (mode == AblationMode::RandomVocab && target != AblationTarget::TokenStream) {
    throw UsageError("ablation: random_vocab replacement is only defined for the token stream");
  }
}

std::string AblationSpec::label() const {
  std::string s = target == AblationTarget::TokenStream ? "x_t" : "x_e";
  s += mode == AblationMode::Zero ? "->0" : "->random_vocab";
  return s;
}

template <typename Real>
DualStreamModel<Real>::DualStreamModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  const double sd = c.init_std;
  tok_emb_ = normal_parameter<Real>(Shape{c.vocab_size, c.d_model}, c.seed, "tok_emb", sd);
  if (c.position_embedding) {
    pos_emb_ = normal_parameter<Real>(Shape{c.max_seq_len, c.d_model}, c.seed, "pos_emb", sd);
  }
  const auto& sig = c.signature;
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string prefix = "blocks." + std::to_string(l);
    AttentionLayer<Real> attn(c.d_model, c.n_heads, sig.attn_v, sig.attn_o, c.gated, c.mixing_bias);
    attn.init(c.seed, prefix + ".attn", sd);
    FfnLayer<Real> ffn(c.d_model, c.n_heads, c.d_ff, sig.ffn_up, sig.ffn_down, c.mixing_bias);
    ffn.init(c.seed, prefix + ".ffn", sd);
    attention_.push_back(std::move(attn));
    ffn_.push_back(std::move(ffn));
  }
  final_ln_ = LayerNorm<Real>(c.d_model);
  if (!c.tie_embeddings) {
    lm_head_ = normal_parameter<Real>(Shape{c.d_model, c.vocab_size}, c.seed, "lm_head", sd);
  }
}

template <typename Real>
Tensor<Real> DualStreamModel<Real>::embed(const TokenIds& tokens) const {
  if (tokens.shape.size() != 2) {
    throw DimensionError("model: tokens must be [B, T], got " + shape_to_string(tokens.shape));
  }
  const std::size_t B = tokens.shape[0], T = tokens.shape[1];
  if (T > config_.max_seq_len) {
    throw DataError("model: sequence length " + std::to_string(T) + " exceeds max " +
                    std::to_string(config_.max_seq_len));
  }
  auto x = embedding(tokens, tok_emb_);
  if (pos_emb_.defined()) {
    std::vector<std::int32_t> pos(B * T);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t) pos[b * T + t] = static_cast<std::int32_t>(t);
    x = add(x, embedding(TokenIds(tokens.shape, std::move(pos)), pos_emb_));
  }
  return x;
}

template <typename Real>
Tensor<Real> DualStreamModel<Real>::project(const Tensor<Real>& combined) const {
  const auto normed = final_ln_.forward(combined);
  if (lm_head_.defined()) return linear(normed, lm_head_);
  return linear(normed, transpose_last2(tok_emb_));
}

template <typename Real>
void DualStreamModel<Real>::apply_ablation(StreamState<Real>& state, const AblationSpec& spec,
                                           const TokenIds& tokens) const {
  if (spec.target == AblationTarget::ContextStream) {
    state.x_e = Tensor<Real>(state.x_e.shape(), Real(0));
    return;
  }
  if (spec.mode == AblationMode::Zero) {
    state.x_t = Tensor<Real>(state.x_t.shape(), Real(0));
    return;
  }
  Rng rng(spec.seed);
  std::vector<std::int32_t> ids(tokens.numel());
  for (auto& id : ids) id = static_cast<std::int32_t>(rng.below(config_.vocab_size));
  state.x_t = embed(TokenIds(tokens.shape, std::move(ids)));
}

template <typename Real>
ForwardResult<Real> DualStreamModel<Real>::forward(const TokenIds& tokens, const ForwardOptions& options) const {
  if (!(options.alpha > 0.0)) throw UsageError("model: alpha must be > 0");
  if (options.alpha != 1.0 && GradMode::enabled() && tok_emb_.requires_grad()) {
    throw UsageError("model: attention amplification (alpha != 1) is inference-only; disable gradient recording");
  }
  if (options.ablation) options.ablation->validate();
  const Real alpha = static_cast<Real>(options.alpha);
  const auto mode = config_.stream_mode;

  ForwardResult<Real> result;
  StreamState<Real> state;
  state.x_t = embed(tokens);
  state.x_e = Tensor<Real>(state.x_t.shape(), Real(0));
  result.trace.embedding = state;
  const bool every_layer = options.ablation && options.ablation->scope == AblationScope::EveryLayer;

  for (std::size_t l = 0; l < attention_.size(); ++l) {
    if (every_layer) apply_ablation(state, *options.ablation, tokens);
    LayerTrace<Real> lt;
    lt.input = state;
    lt.attention = attention_[l].attend(state.x_t, state.x_e, alpha, mode == StreamMode::SingleStream);
    if (mode == StreamMode::FrozenTokenStream) {
      // x_t stays at its initial value; attention output accumulates in x_e.
      state.x_e = add(state.x_e, lt.attention.delta);
    } else {
      state.x_t = add(state.x_t, lt.attention.delta);
    }
    lt.x_t_mid = state.x_t;
    state.x_e = add(state.x_e, ffn_[l].forward(state.x_t, state.x_e));
    lt.output = state;
    if (options.layer_logits && l + 1 < attention_.size()) lt.logits = project(add(state.x_t, state.x_e));
    result.trace.layers.push_back(std::move(lt));
  }
  if (options.ablation) apply_ablation(state, *options.ablation, tokens);
  result.logits = project(add(state.x_t, state.x_e));
  return result;
}

template <typename Real>
LossBreakdown<Real> DualStreamModel<Real>::loss_breakdown(const TokenIds& tokens, const TokenIds& targets) const {
  if (tokens.shape != targets.shape) {
    throw DataError("model: targets " + shape_to_string(targets.shape) + " do not match tokens " +
                    shape_to_string(tokens.shape));
  }
  const auto& sup = config_.supervision;
  const bool supervised = sup.enabled && sup.lambda > 0.0 && attention_.size() >= 2;
  ForwardOptions opts;
  opts.layer_logits = supervised;
  auto fwd = forward(tokens, opts);

  LossBreakdown<Real> out;
  out.final_loss = cross_entropy(fwd.logits, targets);
  out.total = out.final_loss;
  if (supervised) {
    out.layer_weights = supervision_weights(sup.schedule, attention_.size());
    for (std::size_t l = 0; l + 1 < attention_.size(); ++l) {
      auto ce = cross_entropy(fwd.trace.layers[l].logits, targets);
      out.layer_losses.push_back(ce);
      out.total = add(out.total, scale(ce, static_cast<Real>(sup.lambda * out.layer_weights[l])));
    }
  }
  return out;
}

template <typename Real>
Tensor<Real> DualStreamModel<Real>::loss(const TokenIds& tokens, const TokenIds& targets) const {
  return loss_breakdown(tokens, targets).total;
}

template <typename Real>
std::vector<std::int32_t> DualStreamModel<Real>::generate(const std::vector<std::int32_t>& prompt, std::size_t n,
                                                          double alpha, double temperature,
                                                          std::uint64_t seed) const {
  if (n == 0) throw UsageError("generate: n must be >= 1");
  if (prompt.empty()) throw DataError("generate: prompt is empty");
  if (prompt.size() > config_.max_seq_len) {
    throw DataError("generate: prompt of " + std::to_string(prompt.size()) + " tokens exceeds max length " +
                    std::to_string(config_.max_seq_len));
  }
  if (temperature < 0.0) throw UsageError("generate: temperature must be >= 0");
  NoGradGuard no_grad;
  Rng rng(seed);
  std::vector<std::int32_t> seq = prompt;
  std::vector<std::int32_t> generated;
  ForwardOptions opts;
  opts.alpha = alpha;
  const std::size_t V = config_.vocab_size;
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t len = std::min(seq.size(), config_.max_seq_len);
    std::vector<std::int32_t> window(seq.end() - static_cast<std::ptrdiff_t>(len), seq.end());
    const auto logits = forward(TokenIds(Shape{1, len}, std::move(window)), opts).logits;
    const Real* last = logits.data().data() + (len - 1) * V;
    std::int32_t next = 0;
    if (temperature == 0.0) {
      next = static_cast<std::int32_t>(std::max_element(last, last + V) - last);
    } else {
      std::vector<double> p(V);
      const double mx = *std::max_element(last, last + V);
      double z = 0.0;
      for (std::size_t j = 0; j < V; ++j) z += (p[j] = std::exp((last[j] - mx) / temperature));
      double u = rng.uniform() * z;
      next = static_cast<std::int32_t>(V - 1);
      for (std::size_t j = 0; j < V; ++j) {
        u -= p[j];
        if (u < 0.0) {
          next = static_cast<std::int32_t>(j);
          break;
        }
      }
    }
    seq.push_back(next);
    generated.push_back(next);
  }
  return generated;
}

template <typename Real>
ParameterList<Real> DualStreamModel<Real>::parameters() const {
  ParameterList<Real> out;
  out.push_back({"tok_emb", tok_emb_, ParamKind::Embedding, "-"});
  if (pos_emb_.defined()) out.push_back({"pos_emb", pos_emb_, ParamKind::Embedding, "-"});
  for (std::size_t l = 0; l < attention_.size(); ++l) {
    const std::string prefix = "blocks." + std::to_string(l);
    attention_[l].collect_parameters(prefix + ".attn", out);
    ffn_[l].collect_parameters(prefix + ".ffn", out);
  }
  final_ln_.collect_parameters("final_ln", out);
  if (lm_head_.defined()) out.push_back({"lm_head", lm_head_, ParamKind::Weight, "dns"});
  return out;
}

template <typename Real>
void DualStreamModel<Real>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <typename Real>
Census param_census(const DualStreamModel<Real>& model) {
  Census census;
  for (const auto& p : model.parameters()) {
    census.rows.push_back({p.name, p.tensor.shape(), p.tensor.numel(), p.strategy});
    census.total += p.tensor.numel();
  }
  return census;
}

template <typename To, typename From>
void copy_parameters(const DualStreamModel<From>& src, DualStreamModel<To>& dst) {
  const auto from = src.parameters();
  auto to = dst.parameters();
  if (from.size() != to.size()) throw UsageError("copy_parameters: models have different layouts");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].name != to[i].name || from[i].tensor.shape() != to[i].tensor.shape()) {
      throw UsageError("copy_parameters: parameter mismatch at " + from[i].name);
    }
    const auto s = from[i].tensor.data();
    auto d = to[i].tensor.mutable_data();
    for (std::size_t j = 0; j < s.size(); ++j) d[j] = static_cast<To>(s[j]);
  }
}

template class DualStreamModel<float>;
template class DualStreamModel<double>;
template Census param_census(const DualStreamModel<float>&);
template Census param_census(const DualStreamModel<double>&);
template void copy_parameters(const DualStreamModel<float>&, DualStreamModel<float>&);
template void copy_parameters(const DualStreamModel<float>&, DualStreamModel<double>&);
template void copy_parameters(const DualStreamModel<double>&, DualStreamModel<float>&);
template void copy_parameters(const DualStreamModel<double>&, DualStreamModel<double>&);

}  // namespace dstf
