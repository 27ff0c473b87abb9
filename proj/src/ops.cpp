#include "dstf/ops.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dstf/errors.hpp"

namespace dstf {
namespace {

template <typename Real>
using ImplPtr = std::shared_ptr<TensorImpl<Real>>;

template <typename Real>
using Parents = std::span<const ImplPtr<Real>>;

template <typename Real>
void record(Tensor<Real>& out, std::vector<Tensor<Real>> parents, typename Tape<Real>::BackwardFn fn) {
  Tape<Real>::current().record(out, std::move(parents), std::move(fn));
}

// Gradient buffer of a parent, or nullptr when it does not need one.
template <typename Real>
Real* grad_of(const ImplPtr<Real>& p) {
  return p->requires_grad ? p->grad_buffer().data() : nullptr;
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a) + " vs " + shape_to_string(b));
  }
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// C[m, n] += A[m, k] * B[k, n]
template <typename Real>
void gemm_nn_acc(const Real* A, const Real* B, Real* __restrict C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* __restrict c = C + i * n;
    const Real* a = A + i * k;
    std::size_t p = 0;
    // Four rows of B per pass; each c[j] still accumulates in ascending p.
    for (; p + 4 <= k; p += 4) {
      const Real a0 = a[p], a1 = a[p + 1], a2 = a[p + 2], a3 = a[p + 3];
      const Real* b0 = B + p * n;
      const Real* b1 = b0 + n;
      const Real* b2 = b1 + n;
      const Real* b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j) {
        Real v = c[j];
        v += a0 * b0[j];
        v += a1 * b1[j];
        v += a2 * b2[j];
        v += a3 * b3[j];
        c[j] = v;
      }
    }
    for (; p < k; ++p) {
      const Real av = a[p];
      const Real* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[k, n] += A[m, k]^T * B[m, n]
template <typename Real>
void gemm_tn_acc(const Real* A, const Real* B, Real* __restrict C, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const Real* a0 = A + i * k;
    const Real* a1 = a0 + k;
    const Real* a2 = a1 + k;
    const Real* a3 = a2 + k;
    const Real* b0 = B + i * n;
    const Real* b1 = b0 + n;
    const Real* b2 = b1 + n;
    const Real* b3 = b2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
      Real* __restrict c = C + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        Real v = c[j];
        v += v0 * b0[j];
        v += v1 * b1[j];
        v += v2 * b2[j];
        v += v3 * b3[j];
        c[j] = v;
      }
    }
  }
  for (; i < m; ++i) {
    const Real* a = A + i * k;
    const Real* b = B + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = a[p];
      Real* __restrict c = C + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m, k] += A[m, n] * B[k, n]^T
template <typename Real>
void gemm_nt_acc(const Real* A, const Real* B, Real* C, std::size_t m, std::size_t n, std::size_t k) {
  std::vector<Real> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
  gemm_nn_acc(A, bt.data(), C, m, n, k);
}

template <typename Real>
Tensor<Real> elementwise_binary(const Tensor<Real>& a, const Tensor<Real>& b, const char* name, int kind) {
  require_same_shape(a.shape(), b.shape(), name);
  const auto x = a.data();
  const auto y = b.data();
  std::vector<Real> out(x.size());
  switch (kind) {
    case 0: for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i]; break;
    case 1: for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i]; break;
    default: for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i]; break;
  }
  Tensor<Real> result(a.shape(), std::move(out));
  record<Real>(result, {a, b}, [kind](TensorImpl<Real>& o, Parents<Real> ps) {
    const auto& g = o.grad;
    const auto& pa = ps[0];
    const auto& pb = ps[1];
    const std::size_t n = g.size();
    if (Real* ga = grad_of(pa)) {
      if (kind == 2) {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * pb->data[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
    }
    if (Real* gb = grad_of(pb)) {
      if (kind == 2) {
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * pa->data[i];
      } else if (kind == 1) {
        for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    }
  });
  return result;
}

}  // namespace

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return elementwise_binary(a, b, "add", 0);
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return elementwise_binary(a, b, "sub", 1);
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return elementwise_binary(a, b, "mul", 2);
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  const auto x = a.data();
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * x[i];
  Tensor<Real> result(a.shape(), std::move(out));
  record<Real>(result, {a}, [factor](TensorImpl<Real>& o, Parents<Real> ps) {
    if (Real* ga = grad_of(ps[0])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += factor * o.grad[i];
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& a) {
  double acc = 0.0;
  for (Real v : a.data()) acc += v;
  auto result = Tensor<Real>::scalar(static_cast<Real>(acc));
  record<Real>(result, {a}, [](TensorImpl<Real>& o, Parents<Real> ps) {
    if (Real* ga = grad_of(ps[0])) {
      const Real g = o.grad[0];
      for (std::size_t i = 0; i < ps[0]->data.size(); ++i) ga[i] += g;
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& a) {
  double acc = 0.0;
  for (Real v : a.data()) acc += v;
  const double n = static_cast<double>(a.numel());
  auto result = Tensor<Real>::scalar(static_cast<Real>(acc / n));
  record<Real>(result, {a}, [n](TensorImpl<Real>& o, Parents<Real> ps) {
    if (Real* ga = grad_of(ps[0])) {
      const Real g = static_cast<Real>(o.grad[0] / n);
      for (std::size_t i = 0; i < ps[0]->data.size(); ++i) ga[i] += g;
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const auto mismatch = [&] {
    return DimensionError("matmul: incompatible shapes " + shape_to_string(sa) + " and " + shape_to_string(sb));
  };
  if (sa.size() < 2 || sa.size() != sb.size()) throw mismatch();
  const std::size_t r = sa.size();
  if (!std::equal(sa.begin(), sa.end() - 2, sb.begin())) throw mismatch();
  const std::size_t m = sa[r - 2], k = sa[r - 1], n = sb[r - 1];
  if (sb[r - 2] != k) throw mismatch();
  const std::size_t batch = shape_numel(Shape(sa.begin(), sa.end() - 2));

  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<Real> out(batch * m * n, Real(0));
  const Real* A = a.data().data();
  const Real* B = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_nn_acc(A + i * m * k, B + i * k * n, out.data() + i * m * n, m, k, n);
  }
  Tensor<Real> result(std::move(out_shape), std::move(out));
  record<Real>(result, {a, b}, [batch, m, k, n](TensorImpl<Real>& o, Parents<Real> ps) {
    const Real* G = o.grad.data();
    if (Real* ga = grad_of(ps[0])) {
      const Real* Bd = ps[1]->data.data();
      for (std::size_t i = 0; i < batch; ++i) gemm_nt_acc(G + i * m * n, Bd + i * k * n, ga + i * m * k, m, n, k);
    }
    if (Real* gb = grad_of(ps[1])) {
      const Real* Ad = ps[0]->data.data();
      for (std::size_t i = 0; i < batch; ++i) gemm_tn_acc(Ad + i * m * k, G + i * m * n, gb + i * k * n, m, k, n);
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> transpose_last2(const Tensor<Real>& a) {
  const auto& s = a.shape();
  if (s.size() < 2) throw DimensionError("transpose_last2: rank < 2 for " + shape_to_string(s));
  const std::size_t r = s.size();
  const std::size_t rows = s[r - 2], cols = s[r - 1];
  const std::size_t batch = a.numel() / (rows * cols);
  Shape out_shape = s;
  std::swap(out_shape[r - 2], out_shape[r - 1]);
  const auto x = a.data();
  std::vector<Real> out(x.size());
  for (std::size_t b = 0; b < batch; ++b) {
    const Real* src = x.data() + b * rows * cols;
    Real* dst = out.data() + b * rows * cols;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
  }
  Tensor<Real> result(std::move(out_shape), std::move(out));
  record<Real>(result, {a}, [batch, rows, cols](TensorImpl<Real>& o, Parents<Real> ps) {
    if (Real* ga = grad_of(ps[0])) {
      for (std::size_t b = 0; b < batch; ++b) {
        const Real* g = o.grad.data() + b * rows * cols;
        Real* d = ga + b * rows * cols;
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) d[i * cols + j] += g[j * rows + i];
      }
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias) {
  const auto& sx = x.shape();
  const auto& sw = weight.shape();
  if (sw.size() != 2 || sx.empty() || sx.back() != sw[0]) {
    throw DimensionError("linear: incompatible shapes " + shape_to_string(sx) + " and " + shape_to_string(sw));
  }
  const std::size_t k = sw[0], n = sw[1];
  const std::size_t rows = x.numel() / k;
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != n) {
    throw DimensionError("linear: bias " + shape_to_string(bias.shape()) + " does not match output width " +
                         std::to_string(n));
  }
  Shape out_shape = sx;
  out_shape.back() = n;
  std::vector<Real> out(rows * n, Real(0));
  if (has_bias) {
    const auto bd = bias.data();
    for (std::size_t i = 0; i < rows; ++i) std::copy(bd.begin(), bd.end(), out.begin() + i * n);
  }
  gemm_nn_acc(x.data().data(), weight.data().data(), out.data(), rows, k, n);
  Tensor<Real> result(std::move(out_shape), std::move(out));
  std::vector<Tensor<Real>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  record<Real>(result, std::move(parents), [rows, k, n](TensorImpl<Real>& o, Parents<Real> ps) {
    const Real* G = o.grad.data();
    if (Real* gx = grad_of(ps[0])) gemm_nt_acc(G, ps[1]->data.data(), gx, rows, n, k);
    if (Real* gw = grad_of(ps[1])) gemm_tn_acc(ps[0]->data.data(), G, gw, rows, k, n);
    if (ps.size() > 2) {
      if (Real* gb = grad_of(ps[2])) {
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += G[i * n + j];
      }
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, int axis, Real scale_factor) {
  if (!(scale_factor > Real(0))) throw UsageError("softmax: scale must be positive");
  const auto& s = x.shape();
  const std::size_t ax = normalize_axis(axis, s.size(), "softmax");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[ax];
  const auto in = x.data();
  std::vector<Real> out(in.size());
  std::vector<Real> z(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      // Scaled logits are materialized first so that scaling here is
      // bit-identical to scaling the input beforehand.
      for (std::size_t j = 0; j < n; ++j) z[j] = scale_factor * in[base + j * inner];
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, z[j]);
      Real total = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const Real e = std::exp(z[j] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
      assert(!std::isnan(total) && "softmax: NaN input");
    }
  }
  Tensor<Real> result(s, std::move(out));
  record<Real>(result, {x}, [outer, inner, n, scale_factor](TensorImpl<Real>& o, Parents<Real> ps) {
    Real* gx = grad_of(ps[0]);
    if (!gx) return;
    const auto& y = o.data;
    const auto& g = o.grad;
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = a * n * inner + i;
        Real dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += scale_factor * y[idx] * (g[idx] - dot);
        }
      }
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> causal_mask(const Tensor<Real>& x) {
  const auto& s = x.shape();
  if (s.size() < 2 || s[s.size() - 1] != s[s.size() - 2]) {
    throw DimensionError("causal_mask: trailing dims must be square, got " + shape_to_string(s));
  }
  const std::size_t t = s.back();
  const std::size_t batch = x.numel() / (t * t);
  std::vector<Real> out(x.data().begin(), x.data().end());
  const Real neg_inf = -std::numeric_limits<Real>::infinity();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = i + 1; j < t; ++j) out[(b * t + i) * t + j] = neg_inf;
  Tensor<Real> result(s, std::move(out));
  record<Real>(result, {x}, [batch, t](TensorImpl<Real>& o, Parents<Real> ps) {
    if (Real* gx = grad_of(ps[0])) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < t; ++i)
          for (std::size_t j = 0; j <= i; ++j) gx[(b * t + i) * t + j] += o.grad[(b * t + i) * t + j];
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  const auto in = x.data();
  std::vector<Real> out(in.size());
  const Real inv_sqrt2 = Real(1) / std::sqrt(Real(2));
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = Real(0.5) * in[i] * (Real(1) + std::erf(in[i] * inv_sqrt2));
  Tensor<Real> result(x.shape(), std::move(out));
  record<Real>(result, {x}, [inv_sqrt2](TensorImpl<Real>& o, Parents<Real> ps) {
    Real* gx = grad_of(ps[0]);
    if (!gx) return;
    const Real inv_sqrt_2pi = Real(1) / std::sqrt(Real(2) * std::numbers::pi_v<Real>);
    const auto& v = ps[0]->data;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Real cdf = Real(0.5) * (Real(1) + std::erf(v[i] * inv_sqrt2));
      const Real pdf = inv_sqrt_2pi * std::exp(Real(-0.5) * v[i] * v[i]);
      gx[i] += o.grad[i] * (cdf + v[i] * pdf);
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  const auto in = x.data();
  std::vector<Real> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = Real(1) / (Real(1) + std::exp(-in[i]));
  Tensor<Real> result(x.shape(), std::move(out));
  record<Real>(result, {x}, [](TensorImpl<Real>& o, Parents<Real> ps) {
    if (Real* gx = grad_of(ps[0])) {
      for (std::size_t i = 0; i < o.data.size(); ++i) gx[i] += o.grad[i] * o.data[i] * (Real(1) - o.data[i]);
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  Tensor<Real> result(std::move(shape), std::vector<Real>(x.data().begin(), x.data().end()));
  record<Real>(result, {x}, [](TensorImpl<Real>& o, Parents<Real> ps) {
    if (Real* gx = grad_of(ps[0])) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size(), "concat");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= first[i];
  for (std::size_t i = ax + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == ax) || s[i] == first[i];
    if (!ok) throw DimensionError("concat: shape mismatch " + shape_to_string(first) + " vs " + shape_to_string(s));
    widths.push_back(s[ax]);
    total += s[ax];
  }
  Shape out_shape = first;
  out_shape[ax] = total;
  std::vector<Real> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto src = parts[p].data();
    const std::size_t w = widths[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + o * w, w, out.data() + o * total * inner + offset * inner);
    }
    offset += widths[p];
  }
  Tensor<Real> result(std::move(out_shape), std::move(out));
  record<Real>(result, parts, [outer, inner, total, widths](TensorImpl<Real>& o, Parents<Real> ps) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < ps.size(); ++p) {
      const std::size_t w = widths[p] * inner;
      if (Real* g = grad_of(ps[p])) {
        for (std::size_t a = 0; a < outer; ++a) {
          const Real* src = o.grad.data() + a * total * inner + off * inner;
          for (std::size_t i = 0; i < w; ++i) g[a * w + i] += src[i];
        }
      }
      off += widths[p];
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> split_heads(const Tensor<Real>& x, std::size_t heads) {
  const auto& s = x.shape();
  if (s.size() != 3) throw DimensionError("split_heads: expected [B,T,D], got " + shape_to_string(s));
  if (heads == 0 || s[2] % heads != 0) {
    throw ConfigError("split_heads: D=" + std::to_string(s[2]) + " is not divisible by H=" + std::to_string(heads));
  }
  const std::size_t B = s[0], T = s[1], H = heads, d = s[2] / heads;
  const auto in = x.data();
  std::vector<Real> out(in.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t h = 0; h < H; ++h)
        std::copy_n(in.data() + ((b * T + t) * H + h) * d, d, out.data() + ((b * H + h) * T + t) * d);
  Tensor<Real> result(Shape{B, H, T, d}, std::move(out));
  record<Real>(result, {x}, [B, T, H, d](TensorImpl<Real>& o, Parents<Real> ps) {
    if (Real* gx = grad_of(ps[0])) {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t h = 0; h < H; ++h) {
            const Real* g = o.grad.data() + ((b * H + h) * T + t) * d;
            Real* dst = gx + ((b * T + t) * H + h) * d;
            for (std::size_t i = 0; i < d; ++i) dst[i] += g[i];
          }
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> merge_heads(const Tensor<Real>& x) {
  const auto& s = x.shape();
  if (s.size() != 4) throw DimensionError("merge_heads: expected [B,H,T,d], got " + shape_to_string(s));
  const std::size_t B = s[0], H = s[1], T = s[2], d = s[3];
  const auto in = x.data();
  std::vector<Real> out(in.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t t = 0; t < T; ++t)
        std::copy_n(in.data() + ((b * H + h) * T + t) * d, d, out.data() + ((b * T + t) * H + h) * d);
  Tensor<Real> result(Shape{B, T, H * d}, std::move(out));
  record<Real>(result, {x}, [B, T, H, d](TensorImpl<Real>& o, Parents<Real> ps) {
    if (Real* gx = grad_of(ps[0])) {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t t = 0; t < T; ++t) {
            const Real* g = o.grad.data() + ((b * T + t) * H + h) * d;
            Real* dst = gx + ((b * H + h) * T + t) * d;
            for (std::size_t i = 0; i < d; ++i) dst[i] += g[i];
          }
    }
  });
  return result;
}

namespace {

Shape grouped_shape(const Shape& s, std::size_t group, const char* op) {
  if (s.empty() || group == 0 || s.back() % group != 0) {
    throw ConfigError(std::string(op) + ": trailing dim of " + shape_to_string(s) + " is not divisible by group " +
                      std::to_string(group));
  }
  Shape out = s;
  out.back() = s.back() / group;
  return out;
}

}  // namespace

template <typename Real>
Tensor<Real> mean_groups(const Tensor<Real>& x, std::size_t group) {
  Shape out_shape = grouped_shape(x.shape(), group, "mean_groups");
  const auto in = x.data();
  const std::size_t groups = in.size() / group;
  std::vector<Real> out(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    Real acc = 0;
    for (std::size_t i = 0; i < group; ++i) acc += in[gi * group + i];
    out[gi] = acc / static_cast<Real>(group);
  }
  Tensor<Real> result(std::move(out_shape), std::move(out));
  record<Real>(result, {x}, [group, groups](TensorImpl<Real>& o, Parents<Real> ps) {
    if (Real* gx = grad_of(ps[0])) {
      for (std::size_t gi = 0; gi < groups; ++gi) {
        const Real g = o.grad[gi] / static_cast<Real>(group);
        for (std::size_t i = 0; i < group; ++i) gx[gi * group + i] += g;
      }
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> var_groups(const Tensor<Real>& x, std::size_t group) {
  Shape out_shape = grouped_shape(x.shape(), group, "var_groups");
  const auto in = x.data();
  const std::size_t groups = in.size() / group;
  std::vector<Real> out(groups), means(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    Real mu = 0;
    for (std::size_t i = 0; i < group; ++i) mu += in[gi * group + i];
    mu /= static_cast<Real>(group);
    Real var = 0;
    for (std::size_t i = 0; i < group; ++i) {
      const Real c = in[gi * group + i] - mu;
      var += c * c;
    }
    means[gi] = mu;
    out[gi] = var / static_cast<Real>(group);
  }
  Tensor<Real> result(std::move(out_shape), std::move(out));
  record<Real>(result, {x}, [group, groups, means](TensorImpl<Real>& o, Parents<Real> ps) {
    if (Real* gx = grad_of(ps[0])) {
      const auto& v = ps[0]->data;
      for (std::size_t gi = 0; gi < groups; ++gi) {
        const Real g = Real(2) * o.grad[gi] / static_cast<Real>(group);
        for (std::size_t i = 0; i < group; ++i) gx[gi * group + i] += g * (v[gi * group + i] - means[gi]);
      }
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> normalize_groups(const Tensor<Real>& x, std::size_t group, Real eps) {
  grouped_shape(x.shape(), group, "normalize_groups");
  if (!(eps > Real(0))) throw ConfigError("normalize_groups: epsilon must be positive");
  const auto in = x.data();
  const std::size_t groups = in.size() / group;
  std::vector<Real> out(in.size());
  std::vector<Real> rstd(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const Real* v = in.data() + gi * group;
    Real mu = 0;
    for (std::size_t i = 0; i < group; ++i) mu += v[i];
    mu /= static_cast<Real>(group);
    Real var = 0;
    for (std::size_t i = 0; i < group; ++i) var += (v[i] - mu) * (v[i] - mu);
    var /= static_cast<Real>(group);
    const Real r = Real(1) / std::sqrt(var + eps);
    rstd[gi] = r;
    for (std::size_t i = 0; i < group; ++i) out[gi * group + i] = (v[i] - mu) * r;
  }
  Tensor<Real> result(x.shape(), std::move(out));
  record<Real>(result, {x}, [group, groups, rstd = std::move(rstd)](TensorImpl<Real>& o, Parents<Real> ps) {
    Real* gx = grad_of(ps[0]);
    if (!gx) return;
    const Real inv_n = Real(1) / static_cast<Real>(group);
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const Real* y = o.data.data() + gi * group;
      const Real* g = o.grad.data() + gi * group;
      Real g_mean = 0, gy_mean = 0;
      for (std::size_t i = 0; i < group; ++i) {
        g_mean += g[i];
        gy_mean += g[i] * y[i];
      }
      g_mean *= inv_n;
      gy_mean *= inv_n;
      for (std::size_t i = 0; i < group; ++i) gx[gi * group + i] += rstd[gi] * (g[i] - g_mean - y[i] * gy_mean);
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> channel_affine(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta) {
  const auto& s = x.shape();
  const std::size_t c = s.empty() ? 0 : s.back();
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("channel_affine: input " + shape_to_string(s) + " vs gamma " +
                         shape_to_string(gamma.shape()) + " / beta " + shape_to_string(beta.shape()));
  }
  const auto in = x.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  const std::size_t rows = in.size() / c;
  std::vector<Real> out(in.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = in[r * c + j] * gm[j] + bt[j];
  Tensor<Real> result(s, std::move(out));
  record<Real>(result, {x, gamma, beta}, [rows, c](TensorImpl<Real>& o, Parents<Real> ps) {
    const Real* g = o.grad.data();
    if (Real* gx = grad_of(ps[0])) {
      const Real* gm = ps[1]->data.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += g[r * c + j] * gm[j];
    }
    if (Real* gg = grad_of(ps[1])) {
      const Real* v = ps[0]->data.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) gg[j] += g[r * c + j] * v[r * c + j];
    }
    if (Real* gb = grad_of(ps[2])) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> embedding(const TokenIds& ids, const Tensor<Real>& table) {
  const auto& st = table.shape();
  if (st.size() != 2) throw DimensionError("embedding: table must be [V, D], got " + shape_to_string(st));
  const std::size_t V = st[0], D = st[1];
  for (auto id : ids.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= V) {
      throw DataError("embedding: token id " + std::to_string(id) + " outside [0, " + std::to_string(V) + ")");
    }
  }
  Shape out_shape = ids.shape;
  out_shape.push_back(D);
  const auto tb = table.data();
  std::vector<Real> out(ids.numel() * D);
  for (std::size_t n = 0; n < ids.numel(); ++n) {
    std::copy_n(tb.data() + static_cast<std::size_t>(ids.ids[n]) * D, D, out.data() + n * D);
  }
  Tensor<Real> result(std::move(out_shape), std::move(out));
  record<Real>(result, {table}, [index = ids.ids, D](TensorImpl<Real>& o, Parents<Real> ps) {
    if (Real* gt = grad_of(ps[0])) {
      for (std::size_t n = 0; n < index.size(); ++n) {
        Real* dst = gt + static_cast<std::size_t>(index[n]) * D;
        const Real* g = o.grad.data() + n * D;
        for (std::size_t j = 0; j < D; ++j) dst[j] += g[j];
      }
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, const TokenIds& targets) {
  const auto& s = logits.shape();
  if (s.size() != targets.shape.size() + 1 || !std::equal(targets.shape.begin(), targets.shape.end(), s.begin())) {
    throw DimensionError("cross_entropy: logits " + shape_to_string(s) + " do not match targets " +
                         shape_to_string(targets.shape));
  }
  const std::size_t V = s.back();
  const std::size_t N = targets.numel();
  const auto in = logits.data();
  std::vector<Real> probs(in.size(), Real(0));
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < N; ++n) {
    const std::int32_t t = targets.ids[n];
    if (t == kIgnoreIndex) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= V) {
      throw DataError("cross_entropy: target id " + std::to_string(t) + " outside [0, " + std::to_string(V) + ")");
    }
    const Real* row = in.data() + n * V;
    const Real mx = *std::max_element(row, row + V);
    Real z = 0;
    for (std::size_t j = 0; j < V; ++j) {
      const Real e = std::exp(row[j] - mx);
      probs[n * V + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < V; ++j) probs[n * V + j] /= z;
    total += static_cast<double>(std::log(z) + mx - row[t]);
    ++count;
  }
  if (count == 0) throw DataError("cross_entropy: every target is ignored");
  auto result = Tensor<Real>::scalar(static_cast<Real>(total / static_cast<double>(count)));
  record<Real>(result, {logits},
               [probs = std::move(probs), target = targets.ids, V, count](TensorImpl<Real>& o, Parents<Real> ps) {
                 Real* gl = grad_of(ps[0]);
                 if (!gl) return;
                 const Real g = o.grad[0] / static_cast<Real>(count);
                 for (std::size_t n = 0; n < target.size(); ++n) {
                   if (target[n] == kIgnoreIndex) continue;
                   for (std::size_t j = 0; j < V; ++j) gl[n * V + j] += g * probs[n * V + j];
                   gl[n * V + static_cast<std::size_t>(target[n])] -= g;
                 }
               });
  return result;
}

namespace {

// Rows and per-head width of x whose last dim holds `heads` contiguous slices.
std::pair<std::size_t, std::size_t> head_layout(const Shape& s, std::size_t heads, const char* op) {
  if (s.empty() || heads == 0 || s.back() % heads != 0) {
    throw DimensionError(std::string(op) + ": trailing dim of " + shape_to_string(s) + " does not split into " +
                         std::to_string(heads) + " heads");
  }
  return {shape_numel(s) / s.back(), s.back() / heads};
}

}  // namespace

template <typename Real>
Tensor<Real> kron_mix(const Tensor<Real>& x, const Tensor<Real>& w) {
  const auto& sw = w.shape();
  if (sw.size() != 2 || sw[0] != sw[1]) throw DimensionError("kron_mix: weight must be [H, H], got " + shape_to_string(sw));
  const std::size_t H = sw[0];
  const auto [rows, d] = head_layout(x.shape(), H, "kron_mix");
  std::vector<Real> out(x.numel(), Real(0));
  const Real* W = w.data().data();
  const Real* X = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) gemm_nn_acc(W, X + r * H * d, out.data() + r * H * d, H, H, d);
  Tensor<Real> result(x.shape(), std::move(out));
  record<Real>(result, {x, w}, [rows, H, d](TensorImpl<Real>& o, Parents<Real> ps) {
    const Real* G = o.grad.data();
    if (Real* gx = grad_of(ps[0])) {
      const Real* Wd = ps[1]->data.data();
      for (std::size_t r = 0; r < rows; ++r) gemm_tn_acc(Wd, G + r * H * d, gx + r * H * d, H, H, d);
    }
    if (Real* gw = grad_of(ps[1])) {
      const Real* Xd = ps[0]->data.data();
      for (std::size_t r = 0; r < rows; ++r) gemm_nt_acc(G + r * H * d, Xd + r * H * d, gw, H, d, H);
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> per_head_linear(const Tensor<Real>& x, const Tensor<Real>& w) {
  const auto& sw = w.shape();
  if (sw.size() != 3) throw DimensionError("per_head_linear: weight must be [H, d_in, d_out], got " + shape_to_string(sw));
  const std::size_t H = sw[0], din = sw[1], dout = sw[2];
  const auto [rows, d] = head_layout(x.shape(), H, "per_head_linear");
  if (d != din) {
    throw DimensionError("per_head_linear: input " + shape_to_string(x.shape()) + " vs weight " + shape_to_string(sw));
  }
  Shape out_shape = x.shape();
  out_shape.back() = H * dout;
  std::vector<Real> out(rows * H * dout, Real(0));
  const Real* W = w.data().data();
  const Real* X = x.data().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t h = 0; h < H; ++h)
      gemm_nn_acc(X + (r * H + h) * din, W + h * din * dout, out.data() + (r * H + h) * dout, 1, din, dout);
  Tensor<Real> result(std::move(out_shape), std::move(out));
  record<Real>(result, {x, w}, [rows, H, din, dout](TensorImpl<Real>& o, Parents<Real> ps) {
    const Real* G = o.grad.data();
    if (Real* gx = grad_of(ps[0])) {
      const Real* Wd = ps[1]->data.data();
      for (std::size_t h = 0; h < H; ++h) {
        std::vector<Real> wt(dout * din);
        for (std::size_t i = 0; i < din; ++i)
          for (std::size_t j = 0; j < dout; ++j) wt[j * din + i] = Wd[(h * din + i) * dout + j];
        for (std::size_t r = 0; r < rows; ++r)
          gemm_nn_acc(G + (r * H + h) * dout, wt.data(), gx + (r * H + h) * din, 1, dout, din);
      }
    }
    if (Real* gw = grad_of(ps[1])) {
      const Real* Xd = ps[0]->data.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t h = 0; h < H; ++h)
          gemm_tn_acc(Xd + (r * H + h) * din, G + (r * H + h) * dout, gw + h * din * dout, 1, din, dout);
    }
  });
  return result;
}

template <typename Real>
Tensor<Real> head_dot(const Tensor<Real>& x, const Tensor<Real>& w) {
  const auto& sw = w.shape();
  if (sw.size() != 2) throw DimensionError("head_dot: weight must be [H, d], got " + shape_to_string(sw));
  const std::size_t H = sw[0], d = sw[1];
  const auto [rows, dx] = head_layout(x.shape(), H, "head_dot");
  if (dx != d) throw DimensionError("head_dot: input " + shape_to_string(x.shape()) + " vs weight " + shape_to_string(sw));
  Shape out_shape = x.shape();
  out_shape.back() = H;
  const auto X = x.data();
  const auto W = w.data();
  std::vector<Real> out(rows * H);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t h = 0; h < H; ++h) {
      Real acc = 0;
      for (std::size_t i = 0; i < d; ++i) acc += X[(r * H + h) * d + i] * W[h * d + i];
      out[r * H + h] = acc;
    }
  Tensor<Real> result(std::move(out_shape), std::move(out));
  record<Real>(result, {x, w}, [rows, H, d](TensorImpl<Real>& o, Parents<Real> ps) {
    const Real* G = o.grad.data();
    Real* gx = grad_of(ps[0]);
    Real* gw = grad_of(ps[1]);
    const Real* Xd = ps[0]->data.data();
    const Real* Wd = ps[1]->data.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t h = 0; h < H; ++h) {
        const Real g = G[r * H + h];
        for (std::size_t i = 0; i < d; ++i) {
          if (gx) gx[(r * H + h) * d + i] += g * Wd[h * d + i];
          if (gw) gw[h * d + i] += g * Xd[(r * H + h) * d + i];
        }
      }
  });
  return result;
}

template <typename Real>
Tensor<Real> scale_heads(const Tensor<Real>& x, const Tensor<Real>& g) {
  const auto& sg = g.shape();
  if (sg.empty()) throw DimensionError("scale_heads: gate must have rank >= 1");
  const std::size_t H = sg.back();
  const auto [rows, d] = head_layout(x.shape(), H, "scale_heads");
  if (g.numel() != rows * H || !std::equal(sg.begin(), sg.end() - 1, x.shape().begin())) {
    throw DimensionError("scale_heads: input " + shape_to_string(x.shape()) + " vs gate " + shape_to_string(sg));
  }
  const auto X = x.data();
  const auto Gt = g.data();
  std::vector<Real> out(X.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t i = 0; i < d; ++i) out[(r * H + h) * d + i] = X[(r * H + h) * d + i] * Gt[r * H + h];
  Tensor<Real> result(x.shape(), std::move(out));
  record<Real>(result, {x, g}, [rows, H, d](TensorImpl<Real>& o, Parents<Real> ps) {
    const Real* G = o.grad.data();
    Real* gx = grad_of(ps[0]);
    Real* gg = grad_of(ps[1]);
    const Real* Xd = ps[0]->data.data();
    const Real* Gd = ps[1]->data.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t i = 0; i < d; ++i) {
          const std::size_t idx = (r * H + h) * d + i;
          if (gx) gx[idx] += G[idx] * Gd[r * H + h];
          if (gg) gg[r * H + h] += G[idx] * Xd[idx];
        }
  });
  return result;
}

#define DSTF_INSTANTIATE_OPS(R)                                                                   \
  template Tensor<R> add(const Tensor<R>&, const Tensor<R>&);                                     \
  template Tensor<R> sub(const Tensor<R>&, const Tensor<R>&);                                     \
  template Tensor<R> mul(const Tensor<R>&, const Tensor<R>&);                                     \
  template Tensor<R> scale(const Tensor<R>&, R);                                                  \
  template Tensor<R> sum(const Tensor<R>&);                                                       \
  template Tensor<R> mean(const Tensor<R>&);                                                      \
  template Tensor<R> matmul(const Tensor<R>&, const Tensor<R>&);                                  \
  template Tensor<R> transpose_last2(const Tensor<R>&);                                           \
  template Tensor<R> linear(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&);                \
  template Tensor<R> softmax(const Tensor<R>&, int, R);                                           \
  template Tensor<R> causal_mask(const Tensor<R>&);                                               \
  template Tensor<R> gelu(const Tensor<R>&);                                                      \
  template Tensor<R> sigmoid(const Tensor<R>&);                                                   \
  template Tensor<R> reshape(const Tensor<R>&, Shape);                                            \
  template Tensor<R> concat(const std::vector<Tensor<R>>&, int);                                  \
  template Tensor<R> split_heads(const Tensor<R>&, std::size_t);                                  \
  template Tensor<R> merge_heads(const Tensor<R>&);                                               \
  template Tensor<R> mean_groups(const Tensor<R>&, std::size_t);                                  \
  template Tensor<R> var_groups(const Tensor<R>&, std::size_t);                                   \
  template Tensor<R> normalize_groups(const Tensor<R>&, std::size_t, R);                          \
  template Tensor<R> channel_affine(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&);        \
  template Tensor<R> embedding(const TokenIds&, const Tensor<R>&);                                \
  template Tensor<R> cross_entropy(const Tensor<R>&, const TokenIds&);                            \
  template Tensor<R> kron_mix(const Tensor<R>&, const Tensor<R>&);                                \
  template Tensor<R> per_head_linear(const Tensor<R>&, const Tensor<R>&);                         \
  template Tensor<R> head_dot(const Tensor<R>&, const Tensor<R>&);                                \
  template Tensor<R> scale_heads(const Tensor<R>&, const Tensor<R>&);

DSTF_INSTANTIATE_OPS(float)
DSTF_INSTANTIATE_OPS(double)

#undef DSTF_INSTANTIATE_OPS

}  // namespace dstf
