#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dstf/dataset.hpp"
#include "dstf/model.hpp"
#include "json.hpp"

namespace dstf {

struct EvalOptions {
  double alpha = 1.0;
  std::optional<AblationSpec> ablation;
  std::size_t batch_size = 16;
  std::size_t max_batches = 0;  // 0 evaluates every window
  bool attention_stats = false;
};

struct EvalStats {
  double loss = 0.0;  // mean next-token cross-entropy over all scored targets
  std::size_t targets = 0;
  // Per layer: mean [H, T, T] attention pattern and per-head mean entropy.
  std::vector<std::vector<double>> mean_patterns;
  std::vector<std::vector<double>> entropy;
};

// Forward passes without gradient recording; the log-softmax is evaluated in
// double per position, so the result does not depend on batch_size.
template <typename Real>
EvalStats evaluate(const DualStreamModel<Real>& model, const Dataset& data, const EvalOptions& options = {});

template <typename Real>
double eval_loss(const DualStreamModel<Real>& model, const Dataset& data, double alpha = 1.0,
                 const std::optional<AblationSpec>& ablation = std::nullopt, std::size_t batch_size = 16);

// Trapezoidal area under (x, y). Partial sums are exact in extended precision.
double trapezoid_auc(std::span<const double> x, std::span<const double> y);

struct SweepPoint {
  double alpha = 1.0;
  double loss = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::optional<double> auc;  // present with >= 2 alphas
};

inline const std::vector<double> kDefaultAlphas = {1, 2, 4, 8, 16};

template <typename Real>
SweepResult amplification_sweep(const DualStreamModel<Real>& model, const Dataset& data,
                                std::span<const double> alphas, std::size_t batch_size = 16);

// Mean pairwise cosine distance between flattened, nonnegative head patterns.
double hss(const std::vector<std::vector<double>>& patterns);

// Mean Shannon entropy (nats) of each head's causal attention rows; weights [B, H, T, T].
template <typename Real>
std::vector<double> attention_entropy(const Tensor<Real>& weights);

struct AblationRow {
  std::string condition;  // "baseline", "x_t->0", "x_e->0", "x_t->random_vocab"
  double loss = 0.0;
  double delta_pct = 0.0;
};

double delta_pct(double loss, double baseline);

template <typename Real>
std::vector<AblationRow> run_ablation_suite(const DualStreamModel<Real>& model, const Dataset& data,
                                            std::uint64_t seed = 0, std::size_t batch_size = 16);

struct LayerSpecialization {
  double hss = 0.0;
  std::vector<double> entropy;  // per head
};

struct SpecializationReport {
  std::vector<LayerSpecialization> layers;
  double mean_hss = 0.0;
  double mean_entropy = 0.0;
};

SpecializationReport specialization_from_stats(const EvalStats& stats, std::size_t heads);

template <typename Real>
SpecializationReport head_specialization(const DualStreamModel<Real>& model, const Dataset& data, double alpha = 1.0,
                                         std::size_t batch_size = 16, std::size_t max_batches = 0);

// One evaluation row: alpha, loss, per-layer/head entropy, per-layer HSS.
struct DiagnosticRecord {
  std::string signature;
  std::string stream_mode;
  double alpha = 1.0;
  double loss = 0.0;
  std::vector<std::vector<double>> entropy;
  std::vector<double> hss;
  std::string timestamp;

  nlohmann::json to_json() const;
};

std::string utc_timestamp();

// Output writers. `header` becomes a leading "# ..." comment line when non-empty.
void write_sweep_csv(std::ostream& os, const SweepResult& sweep, const std::string& header);
void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows, const std::string& header);
void write_hss_csv(std::ostream& os, const SpecializationReport& report, const std::string& header);
void write_entropy_csv(std::ostream& os, const SpecializationReport& report, const std::string& header);
// Row-major [rows, cols] matrix with "k0,k1,..." header and "q<i>" row labels.
void write_attention_csv(std::ostream& os, std::span<const double> matrix, std::size_t rows, std::size_t cols,
                         const std::string& header);

}  // namespace dstf
