#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dstf/parameter.hpp"
#include "dstf/tensor.hpp"

namespace dstf {

// Cross-head mixing strategies, ordered by expressiveness:
// each can be written as an instance of the next one.
enum class MixingStrategy : std::uint8_t { Identity = 0, Independent = 1, Kronecker = 2, Dense = 3 };

std::string_view strategy_token(MixingStrategy s);  // "id", "ind", "kron", "dns"
std::string_view strategy_name(MixingStrategy s);   // "Identity", ...
MixingStrategy parse_strategy(std::string_view token);

// Strategies for the four projection sites, written `v-o/up-down`.
struct MixingSignature {
  MixingStrategy attn_v = MixingStrategy::Dense;
  MixingStrategy attn_o = MixingStrategy::Dense;
  MixingStrategy ffn_up = MixingStrategy::Dense;
  MixingStrategy ffn_down = MixingStrategy::Dense;

  friend bool operator==(const MixingSignature&, const MixingSignature&) = default;
};

// Throws ConfigError naming the character position of the offending token.
MixingSignature parse_signature(std::string_view text);
std::string format_signature(const MixingSignature& sig);

// Trainable scalars of one projection site with `heads` heads of width d_in -> d_out:
// 0, H*d_in*d_out, H^2, (H*d_in)*(H*d_out). Bias excluded.
std::size_t param_count(MixingStrategy s, std::size_t heads, std::size_t d_in, std::size_t d_out);

// One configurable projection. Inputs carry H contiguous head slices of width
// d_in on their last dim ([..., H*d_in]) or as two trailing dims ([..., H, d_in]).
template <typename Real>
class MixingLinear {
 public:
  MixingLinear() = default;
  MixingLinear(MixingStrategy strategy, std::size_t heads, std::size_t d_in, std::size_t d_out, bool bias = false);

  // Independent/Dense ~ N(0, stddev^2); Kronecker = I_H + N(0, stddev^2); bias = 0.
  void init(std::uint64_t seed, const std::string& name, double stddev = 0.02);

  Tensor<Real> apply(const Tensor<Real>& x) const;

  MixingStrategy strategy() const { return strategy_; }
  std::size_t heads() const { return heads_; }
  std::size_t d_in() const { return d_in_; }
  std::size_t d_out() const { return d_out_; }
  std::size_t input_width() const { return heads_ * d_in_; }
  std::size_t output_width() const { return heads_ * d_out_; }

  const Tensor<Real>& weight() const { return weight_; }
  Tensor<Real>& weight() { return weight_; }
  const Tensor<Real>& bias() const { return bias_; }
  Tensor<Real>& bias() { return bias_; }
  bool has_bias() const { return bias_.defined(); }

  // Scalars actually allocated (weight plus optional bias).
  std::size_t allocated_params() const;
  void collect_parameters(const std::string& prefix, ParameterList<Real>& out) const;

 private:
  MixingStrategy strategy_ = MixingStrategy::Identity;
  std::size_t heads_ = 0;
  std::size_t d_in_ = 0;
  std::size_t d_out_ = 0;
  Tensor<Real> weight_;
  Tensor<Real> bias_;
};

// Raw H x H routing matrix of a Kronecker layer, row-major; entry (k, h) is the
// weight from source head h into destination head k.
template <typename Real>
std::vector<double> export_kronecker(const MixingLinear<Real>& layer);

// Overwrites a Kronecker layer's routing matrix.
template <typename Real>
void import_kronecker(MixingLinear<Real>& layer, std::span<const double> matrix);

// Routing CSV: optional `# ...` comment line, header `dst\src,h0,...`, then one
// row per destination head, values with 9 significant digits.
void write_routing_csv(std::ostream& os, std::span<const double> matrix, std::size_t heads,
                       std::string_view comment = {});
std::vector<double> read_routing_csv(std::istream& is, std::size_t& heads);

}  // namespace dstf
