#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dstf {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Integer ids with a shape, e.g. a [B, T] batch of token ids.
struct TokenIds {
  Shape shape;
  std::vector<std::int32_t> ids;

  TokenIds() = default;
  TokenIds(Shape s, std::vector<std::int32_t> values);
  std::size_t numel() const { return ids.size(); }
};

// Global switch for tape recording on the calling thread.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Real>
struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
  std::int64_t node_id = -1;  // position on the tape, -1 for leaves

  // Zero-filled gradient buffer, allocated on first use.
  std::vector<Real>& grad_buffer();
};

// Dense row-major tensor handle. Copies share storage; use clone() for a deep copy.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;
  using Impl = TensorImpl<Real>;

  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor scalar(Real value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<const Real> data() const;
  // Writing through this span while the tensor sits on a live tape corrupts backward.
  std::span<Real> mutable_data();
  Real item() const;
  Real at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value = true);
  bool has_grad() const;
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad();
  void zero_grad();

  std::int64_t node_id() const;

  Tensor clone() const;   // deep copy of data, detached from the tape
  Tensor detach() const;  // alias of clone(), reads better at call sites

  Impl* impl() const { return impl_.get(); }
  const std::shared_ptr<Impl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

// Reverse-mode tape. Nodes are appended in creation order, which is a
// topological order, so backward walks the vector from the back.
template <typename Real>
class Tape {
 public:
  using ImplPtr = std::shared_ptr<TensorImpl<Real>>;
  using BackwardFn = std::function<void(TensorImpl<Real>& out, std::span<const ImplPtr> parents)>;

  static Tape& current();

  // Attaches `out` to the tape when grad mode is on and any parent needs a gradient.
  void record(Tensor<Real>& out, std::vector<Tensor<Real>> parents, BackwardFn fn);

  // Populates grads of every reachable requires_grad tensor, then clears the tape.
  // Leaf gradients accumulate across calls until zero_grad().
  void backward(const Tensor<Real>& loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    ImplPtr output;
    std::vector<ImplPtr> parents;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
};

template <typename Real>
void backward(const Tensor<Real>& loss) {
  Tape<Real>::current().backward(loss);
}

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace dstf
