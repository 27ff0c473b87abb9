#include "dstf/mixing.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "dstf/errors.hpp"
#include "dstf/ops.hpp"
#include "dstf/rng.hpp"

namespace dstf {

std::string_view strategy_token(MixingStrategy s) {
  switch (s) {
    case MixingStrategy::Identity: return "id";
    case MixingStrategy::Independent: return "ind";
    case MixingStrategy::Kronecker: return "kron";
    case MixingStrategy::Dense: return "dns";
  }
  return "?";
}

std::string_view strategy_name(MixingStrategy s) {
  switch (s) {
    case MixingStrategy::Identity: return "Identity";
    case MixingStrategy::Independent: return "Independent";
    case MixingStrategy::Kronecker: return "Kronecker";
    case MixingStrategy::Dense: return "Dense";
  }
  return "?";
}

MixingStrategy parse_strategy(std::string_view token) {
  for (auto s : {MixingStrategy::Identity, MixingStrategy::Independent, MixingStrategy::Kronecker,
                 MixingStrategy::Dense}) {
    if (token == strategy_token(s)) return s;
  }
  throw ConfigError("unknown mixing strategy '" + std::string(token) + "' (expected id, ind, kron or dns)");
}

MixingSignature parse_signature(std::string_view text) {
  // Four tokens separated by '-', '/', '-'.
  constexpr char separators[3] = {'-', '/', '-'};
  MixingStrategy parsed[4];
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) {
    std::size_t end = pos;
    while (end < text.size() && text[end] != '-' && text[end] != '/') ++end;
    const std::string_view token = text.substr(pos, end - pos);
    if (token.empty()) {
      throw ConfigError("mixing signature '" + std::string(text) + "': missing token at position " +
                        std::to_string(pos));
    }
    try {
      parsed[i] = parse_strategy(token);
    } catch (const ConfigError&) {
      throw ConfigError("mixing signature '" + std::string(text) + "': unknown token '" + std::string(token) +
                        "' at position " + std::to_string(pos));
    }
    if (i < 3) {
      if (end >= text.size() || text[end] != separators[i]) {
        throw ConfigError("mixing signature '" + std::string(text) + "': expected '" + separators[i] +
                          "' at position " + std::to_string(end) + " (format v-o/up-down)");
      }
      pos = end + 1;
    } else if (end != text.size()) {
      throw ConfigError("mixing signature '" + std::string(text) + "': unexpected trailing text at position " +
                        std::to_string(end));
    }
  }
  return {parsed[0], parsed[1], parsed[2], parsed[3]};
}

std::string format_signature(const MixingSignature& sig) {
  std::string out;
  out += strategy_token(sig.attn_v);
  out += '-';
  out += strategy_token(sig.attn_o);
  out += '/';
  out += strategy_token(sig.ffn_up);
  out += '-';
  out += strategy_token(sig.ffn_down);
  return out;
}

std::size_t param_count(MixingStrategy s, std::size_t heads, std::size_t d_in, std::size_t d_out) {
  switch (s) {
    case MixingStrategy::Identity: return 0;
    case MixingStrategy::Independent: return heads * d_in * d_out;
    case MixingStrategy::Kronecker: return heads * heads;
    case MixingStrategy::Dense: return (heads * d_in) * (heads * d_out);
  }
  return 0;
}

template <typename Real>
MixingLinear<Real>::MixingLinear(MixingStrategy strategy, std::size_t heads, std::size_t d_in, std::size_t d_out,
                                 bool bias)
    : strategy_(strategy), heads_(heads), d_in_(d_in), d_out_(d_out) {
  if (heads == 0 || d_in == 0 || d_out == 0) throw ConfigError("mixing: dimensions must be positive");
  if ((strategy == MixingStrategy::Identity || strategy == MixingStrategy::Kronecker) && d_in != d_out) {
    throw ConfigError(std::string("mixing: ") + std::string(strategy_name(strategy)) +
                      " requires d_in == d_out, got " + std::to_string(d_in) + " -> " + std::to_string(d_out));
  }
  switch (strategy) {
    case MixingStrategy::Identity: break;
    case MixingStrategy::Independent: weight_ = Tensor<Real>(Shape{heads, d_in, d_out}); break;
    case MixingStrategy::Kronecker: weight_ = Tensor<Real>(Shape{heads, heads}); break;
    case MixingStrategy::Dense: weight_ = Tensor<Real>(Shape{heads * d_in, heads * d_out}); break;
  }
  if (weight_.defined()) weight_.set_requires_grad();
  if (bias && strategy != MixingStrategy::Identity) {
    bias_ = Tensor<Real>(Shape{heads * d_out});
    bias_.set_requires_grad();
  }
}

template <typename Real>
void MixingLinear<Real>::init(std::uint64_t seed, const std::string& name, double stddev) {
  if (weight_.defined()) {
    Rng rng = Rng::for_stream(seed, name + ".weight");
    auto w = weight_.mutable_data();
    for (auto& v : w) v = static_cast<Real>(rng.normal(0.0, stddev));
    if (strategy_ == MixingStrategy::Kronecker) {
      for (std::size_t h = 0; h < heads_; ++h) w[h * heads_ + h] += Real(1);
    }
  }
  if (bias_.defined()) {
    for (auto& v : bias_.mutable_data()) v = Real(0);
  }
}

template <typename Real>
Tensor<Real> MixingLinear<Real>::apply(const Tensor<Real>& x) const {
  const Shape& s = x.shape();
  const bool split = s.size() >= 2 && s[s.size() - 2] == heads_ && s.back() == d_in_ &&
                     !(s.back() == heads_ * d_in_);
  Tensor<Real> flat = x;
  if (split) {
    Shape fs(s.begin(), s.end() - 1);
    fs.back() = heads_ * d_in_;
    flat = reshape(x, fs);
  } else if (s.empty() || s.back() != heads_ * d_in_) {
    throw DimensionError("mixing apply: input " + shape_to_string(s) + " does not carry " + std::to_string(heads_) +
                         " heads of width " + std::to_string(d_in_));
  }

  Tensor<Real> y;
  switch (strategy_) {
    case MixingStrategy::Identity: y = flat; break;
    case MixingStrategy::Independent: y = per_head_linear(flat, weight_); break;
    case MixingStrategy::Kronecker: y = kron_mix(flat, weight_); break;
    case MixingStrategy::Dense: y = linear(flat, weight_); break;
  }
  if (bias_.defined()) {
    // channel_affine with unit gain adds the bias per output channel.
    y = channel_affine(y, Tensor<Real>(Shape{output_width()}, Real(1)), bias_);
  }
  if (split) {
    Shape os(s.begin(), s.end());
    os.back() = d_out_;
    y = reshape(y, os);
  }
  return y;
}

template <typename Real>
std::size_t MixingLinear<Real>::allocated_params() const {
  return weight_.numel() + bias_.numel();
}

template <typename Real>
void MixingLinear<Real>::collect_parameters(const std::string& prefix, ParameterList<Real>& out) const {
  const std::string tag(strategy_token(strategy_));
  if (weight_.defined()) out.push_back({prefix + ".weight", weight_, ParamKind::Weight, tag});
  if (bias_.defined()) out.push_back({prefix + ".bias", bias_, ParamKind::Bias, tag});
}

template <typename Real>
std::vector<double> export_kronecker(const MixingLinear<Real>& layer) {
  if (layer.strategy() != MixingStrategy::Kronecker) {
    throw UsageError(std::string("export_kronecker: layer uses ") + std::string(strategy_name(layer.strategy())) +
                     " mixing, not Kronecker");
  }
  const auto w = layer.weight().data();
  return std::vector<double>(w.begin(), w.end());
}

template <typename Real>
void import_kronecker(MixingLinear<Real>& layer, std::span<const double> matrix) {
  if (layer.strategy() != MixingStrategy::Kronecker) {
    throw UsageError("import_kronecker: layer is not Kronecker");
  }
  auto w = layer.weight().mutable_data();
  if (matrix.size() != w.size()) {
    throw DimensionError("import_kronecker: expected " + std::to_string(w.size()) + " values, got " +
                         std::to_string(matrix.size()));
  }
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<Real>(matrix[i]);
}

void write_routing_csv(std::ostream& os, std::span<const double> matrix, std::size_t heads,
                       std::string_view comment) {
  if (matrix.size() != heads * heads) throw DimensionError("routing csv: matrix is not H x H");
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "dst\\src";
  for (std::size_t h = 0; h < heads; ++h) os << ",h" << h;
  os << '\n';
  char buf[64];
  for (std::size_t k = 0; k < heads; ++k) {
    os << 'h' << k;
    for (std::size_t h = 0; h < heads; ++h) {
      std::snprintf(buf, sizeof buf, "%.9g", matrix[k * heads + h]);
      os << ',' << buf;
    }
    os << '\n';
  }
}

std::vector<double> read_routing_csv(std::istream& is, std::size_t& heads) {
  std::string line;
  bool header_seen = false;
  std::vector<double> values;
  heads = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (!header_seen) {
      if (cells.empty() || cells[0] != "dst\\src") throw DataError("routing csv: missing dst\\src header");
      heads = cells.size() - 1;
      header_seen = true;
      continue;
    }
    if (cells.size() != heads + 1) throw DataError("routing csv: ragged row '" + line + "'");
    for (std::size_t i = 1; i < cells.size(); ++i) values.push_back(std::stod(cells[i]));
  }
  if (!header_seen || values.size() != heads * heads) throw DataError("routing csv: expected a square matrix");
  return values;
}

template class MixingLinear<float>;
template class MixingLinear<double>;
template std::vector<double> export_kronecker(const MixingLinear<float>&);
template std::vector<double> export_kronecker(const MixingLinear<double>&);
template void import_kronecker(MixingLinear<float>&, std::span<const double>);
template void import_kronecker(MixingLinear<double>&, std::span<const double>);

}  // namespace dstf
