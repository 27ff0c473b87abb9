#include "dstf/diag.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <ostream>

#include "dstf/errors.hpp"

namespace dstf {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_header(std::ostream& os, const std::string& header) {
  if (!header.empty()) os << "# " << header << '\n';
}

}  // namespace

template <typename Real>
EvalStats evaluate(const DualStreamModel<Real>& model, const Dataset& data, const EvalOptions& options) {
  if (data.empty()) throw UsageError("eval: dataset is empty");
  if (options.batch_size == 0) throw UsageError("eval: batch size must be positive");
  NoGradGuard no_grad;
  const auto& cfg = model.config();
  const std::size_t V = cfg.vocab_size, T = data.seq_len(), H = cfg.n_heads, L = model.n_layers();
  ForwardOptions fwd_opts;
  fwd_opts.alpha = options.alpha;
  fwd_opts.ablation = options.ablation;

  EvalStats stats;
  if (options.attention_stats) {
    stats.mean_patterns.assign(L, std::vector<double>(H * T * T, 0.0));
    stats.entropy.assign(L, std::vector<double>(H, 0.0));
  }
  double nll = 0.0;
  std::size_t sequences = 0;
  std::size_t n_batches = 0;
  for (std::size_t first = 0; first < data.size(); first += options.batch_size) {
    if (options.max_batches && n_batches == options.max_batches) break;
    ++n_batches;
    const std::size_t count = std::min(options.batch_size, data.size() - first);
    const Batch batch = data.batch(first, count);
    const auto fwd = model.forward(batch.inputs, fwd_opts);
    const auto logits = fwd.logits.data();
    for (std::size_t r = 0; r < count * T; ++r) {
      const std::int32_t target = batch.targets.ids[r];
      if (target < 0) continue;
      const Real* row = logits.data() + r * V;
      double mx = row[0];
      for (std::size_t j = 1; j < V; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double z = 0.0;
      for (std::size_t j = 0; j < V; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
      nll += std::log(z) + mx - static_cast<double>(row[target]);
      ++stats.targets;
    }
    if (options.attention_stats) {
      for (std::size_t l = 0; l < L; ++l) {
        const auto& w = fwd.trace.layers[l].attention.weights;
        const auto wd = w.data();
        auto& pattern = stats.mean_patterns[l];
        for (std::size_t b = 0; b < count; ++b)
          for (std::size_t i = 0; i < H * T * T; ++i) pattern[i] += static_cast<double>(wd[b * H * T * T + i]);
        const auto ent = attention_entropy(w);
        for (std::size_t h = 0; h < H; ++h) stats.entropy[l][h] += ent[h] * static_cast<double>(count);
      }
    }
    sequences += count;
  }
  if (stats.targets == 0) throw UsageError("eval: dataset has no scored targets");
  stats.loss = nll / static_cast<double>(stats.targets);
  if (options.attention_stats) {
    const double inv = 1.0 / static_cast<double>(sequences);
    for (auto& p : stats.mean_patterns)
      for (auto& v : p) v *= inv;
    for (auto& e : stats.entropy)
      for (auto& v : e) v *= inv;
  }
  if (!std::isfinite(stats.loss)) throw ComputationError("eval: loss is not finite");
  return stats;
}

template <typename Real>
double eval_loss(const DualStreamModel<Real>& model, const Dataset& data, double alpha,
                 const std::optional<AblationSpec>& ablation, std::size_t batch_size) {
  EvalOptions opts;
  opts.alpha = alpha;
  opts.ablation = ablation;
  opts.batch_size = batch_size;
  return evaluate(model, data, opts).loss;
}

double trapezoid_auc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("auc: x and y lengths differ");
  if (x.size() < 2) throw UsageError("auc: need at least 2 points");
  long double area = 0.0L;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const long double dx = static_cast<long double>(x[i + 1]) - static_cast<long double>(x[i]);
    area += dx * (static_cast<long double>(y[i]) + static_cast<long double>(y[i + 1])) / 2.0L;
  }
  return static_cast<double>(area);
}

template <typename Real>
SweepResult amplification_sweep(const DualStreamModel<Real>& model, const Dataset& data,
                                std::span<const double> alphas, std::size_t batch_size) {
  if (alphas.empty()) throw UsageError("sweep: no alphas given");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0)) throw UsageError("sweep: alpha must be > 0, got " + fmt(alphas[i]));
    if (i && !(alphas[i] > alphas[i - 1])) throw UsageError("sweep: alphas must be strictly ascending");
  }
  SweepResult result;
  std::vector<double> losses;
  for (double a : alphas) {
    result.points.push_back({a, eval_loss(model, data, a, std::nullopt, batch_size)});
    losses.push_back(result.points.back().loss);
  }
  if (alphas.size() >= 2) result.auc = trapezoid_auc(alphas, losses);
  return result;
}

double hss(const std::vector<std::vector<double>>& patterns) {
  const std::size_t H = patterns.size();
  if (H < 2) throw ComputationError("hss: need at least 2 heads, got " + std::to_string(H));
  const std::size_t n = patterns[0].size();
  std::vector<double> norms(H);
  for (std::size_t h = 0; h < H; ++h) {
    if (patterns[h].size() != n) throw DimensionError("hss: head " + std::to_string(h) + " pattern length differs");
    double sq = 0.0;
    for (double v : patterns[h]) {
      if (v < 0.0) throw ComputationError("hss: head " + std::to_string(h) + " pattern has a negative entry");
      sq += v * v;
    }
    norms[h] = std::sqrt(sq);
    if (norms[h] == 0.0) throw ComputationError("hss: head " + std::to_string(h) + " pattern has zero norm");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = i + 1; j < H; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < n; ++k) dot += patterns[i][k] * patterns[j][k];
      total += 2.0 * (1.0 - dot / (norms[i] * norms[j]));
    }
  }
  return total / static_cast<double>(H * (H - 1));
}

template <typename Real>
std::vector<double> attention_entropy(const Tensor<Real>& weights) {
  const Shape& s = weights.shape();
  if (s.size() != 4 || s[2] != s[3]) {
    throw DimensionError("attention_entropy: expected [B, H, T, T], got " + shape_to_string(s));
  }
  const std::size_t B = s[0], H = s[1], T = s[2];
  const auto w = weights.data();
  std::vector<double> out(H, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      const Real* base = w.data() + ((b * H + h) * T) * T;
      for (std::size_t i = 0; i < T; ++i) {
        double e = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          const double p = base[i * T + j];
          if (p > 0.0) e -= p * std::log(p);
        }
        out[h] += e;
      }
    }
  }
  for (auto& v : out) v /= static_cast<double>(B * T);
  return out;
}

double delta_pct(double loss, double baseline) { return (loss - baseline) / baseline * 100.0; }

template <typename Real>
std::vector<AblationRow> run_ablation_suite(const DualStreamModel<Real>& model, const Dataset& data,
                                            std::uint64_t seed, std::size_t batch_size) {
  std::vector<AblationRow> rows;
  const double base = eval_loss(model, data, 1.0, std::nullopt, batch_size);
  rows.push_back({"baseline", base, 0.0});
  const AblationSpec specs[] = {
      {AblationTarget::TokenStream, AblationMode::Zero, AblationScope::EveryLayer, seed},
      {AblationTarget::ContextStream, AblationMode::Zero, AblationScope::EveryLayer, seed},
      {AblationTarget::TokenStream, AblationMode::RandomVocab, AblationScope::EveryLayer, seed},
  };
  for (const auto& spec : specs) {
    const double loss = eval_loss(model, data, 1.0, spec, batch_size);
    rows.push_back({spec.label(), loss, delta_pct(loss, base)});
  }
  return rows;
}

SpecializationReport specialization_from_stats(const EvalStats& stats, std::size_t heads) {
  SpecializationReport report;
  double hss_sum = 0.0, ent_sum = 0.0;
  std::size_t ent_n = 0;
  for (std::size_t l = 0; l < stats.mean_patterns.size(); ++l) {
    const auto& flat = stats.mean_patterns[l];
    const std::size_t n = flat.size() / heads;
    std::vector<std::vector<double>> per_head(heads);
    for (std::size_t h = 0; h < heads; ++h) per_head[h].assign(flat.begin() + h * n, flat.begin() + (h + 1) * n);
    LayerSpecialization ls;
    ls.hss = heads >= 2 ? hss(per_head) : 0.0;
    ls.entropy = stats.entropy[l];
    hss_sum += ls.hss;
    for (double e : ls.entropy) {
      ent_sum += e;
      ++ent_n;
    }
    report.layers.push_back(std::move(ls));
  }
  if (!report.layers.empty()) report.mean_hss = hss_sum / static_cast<double>(report.layers.size());
  if (ent_n) report.mean_entropy = ent_sum / static_cast<double>(ent_n);
  return report;
}

template <typename Real>
SpecializationReport head_specialization(const DualStreamModel<Real>& model, const Dataset& data, double alpha,
                                         std::size_t batch_size, std::size_t max_batches) {
  EvalOptions opts;
  opts.alpha = alpha;
  opts.batch_size = batch_size;
  opts.max_batches = max_batches;
  opts.attention_stats = true;
  return specialization_from_stats(evaluate(model, data, opts), model.config().n_heads);
}

nlohmann::json DiagnosticRecord::to_json() const {
  return {{"signature", signature}, {"stream_mode", stream_mode}, {"alpha", alpha},   {"loss", loss},
          {"entropy", entropy},     {"hss", hss},                 {"timestamp", timestamp}};
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_sweep_csv(std::ostream& os, const SweepResult& sweep, const std::string& header) {
  write_header(os, header);
  os << "alpha,loss\n";
  for (const auto& p : sweep.points) os << fmt(p.alpha) << ',' << fmt(p.loss) << '\n';
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows, const std::string& header) {
  write_header(os, header);
  os << "condition,loss,delta_pct\n";
  for (const auto& r : rows) os << r.condition << ',' << fmt(r.loss) << ',' << fmt(r.delta_pct) << '\n';
}

void write_hss_csv(std::ostream& os, const SpecializationReport& report, const std::string& header) {
  write_header(os, header);
  os << "layer,hss,mean_entropy\n";
  for (std::size_t l = 0; l < report.layers.size(); ++l) {
    const auto& e = report.layers[l].entropy;
    double m = 0.0;
    for (double v : e) m += v;
    if (!e.empty()) m /= static_cast<double>(e.size());
    os << l << ',' << fmt(report.layers[l].hss) << ',' << fmt(m) << '\n';
  }
}

void write_entropy_csv(std::ostream& os, const SpecializationReport& report, const std::string& header) {
  write_header(os, header);
  os << "layer,head,entropy\n";
  for (std::size_t l = 0; l < report.layers.size(); ++l)
    for (std::size_t h = 0; h < report.layers[l].entropy.size(); ++h)
      os << l << ',' << h << ',' << fmt(report.layers[l].entropy[h]) << '\n';
}

void write_attention_csv(std::ostream& os, std::span<const double> matrix, std::size_t rows, std::size_t cols,
                         const std::string& header) {
  if (matrix.size() != rows * cols) throw DimensionError("attention csv: matrix size mismatch");
  write_header(os, header);
  os << "query";
  for (std::size_t j = 0; j < cols; ++j) os << ",k" << j;
  os << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    os << 'q' << i;
    for (std::size_t j = 0; j < cols; ++j) os << ',' << fmt(matrix[i * cols + j]);
    os << '\n';
  }
}

#define DSTF_INSTANTIATE_DIAG(R)                                                                                 \
  template EvalStats evaluate(const DualStreamModel<R>&, const Dataset&, const EvalOptions&);                  \
  template double eval_loss(const DualStreamModel<R>&, const Dataset&, double, const std::optional<AblationSpec>&, \
                            std::size_t);                                                                        \
  template SweepResult amplification_sweep(const DualStreamModel<R>&, const Dataset&, std::span<const double>,  \
                                           std::size_t);                                                         \
  template std::vector<double> attention_entropy(const Tensor<R>&);                                              \
  template std::vector<AblationRow> run_ablation_suite(const DualStreamModel<R>&, const Dataset&, std::uint64_t, \
                                                       std::size_t);                                             \
  template SpecializationReport head_specialization(const DualStreamModel<R>&, const Dataset&, double,         \
                                                    std::size_t, std::size_t);

DSTF_INSTANTIATE_DIAG(float)
DSTF_INSTANTIATE_DIAG(double)

}  // namespace dstf
