#include "dstf/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "dstf/errors.hpp"

namespace dstf {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

TokenIds::TokenIds(Shape s, std::vector<std::int32_t> values) : shape(std::move(s)), ids(std::move(values)) {
  if (shape_numel(shape) != ids.size()) {
    throw DimensionError("token ids: shape " + shape_to_string(shape) + " does not hold " +
                         std::to_string(ids.size()) + " ids");
  }
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool enabled) { g_grad_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Real>
std::vector<Real>& TensorImpl<Real>::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), Real(0));
  return grad;
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, Real fill) : impl_(std::make_shared<Impl>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor: zero-sized dimension in " + shape_to_string(shape));
  }
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> data) : impl_(std::make_shared<Impl>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_to_string(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value) {
  return Tensor(Shape{1}, std::vector<Real>{value});
}

template <typename Real>
const Shape& Tensor<Real>::shape() const {
  if (!impl_) throw UsageError("tensor: use of undefined tensor");
  return impl_->shape;
}

template <typename Real>
std::size_t Tensor<Real>::dim(int axis) const {
  const auto& s = shape();
  const int r = static_cast<int>(s.size());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_to_string(s));
  }
  return s[static_cast<std::size_t>(a)];
}

template <typename Real>
std::size_t Tensor<Real>::numel() const {
  return impl_ ? impl_->data.size() : 0;
}

template <typename Real>
std::span<const Real> Tensor<Real>::data() const {
  if (!impl_) throw UsageError("tensor: use of undefined tensor");
  return impl_->data;
}

template <typename Real>
std::span<Real> Tensor<Real>::mutable_data() {
  if (!impl_) throw UsageError("tensor: use of undefined tensor");
  return impl_->data;
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) throw UsageError("tensor: item() on tensor of shape " + shape_to_string(shape()));
  return impl_->data[0];
}

template <typename Real>
bool Tensor<Real>::requires_grad() const {
  return impl_ && impl_->requires_grad;
}

template <typename Real>
Tensor<Real>& Tensor<Real>::set_requires_grad(bool value) {
  if (!impl_) throw UsageError("tensor: use of undefined tensor");
  impl_->requires_grad = value;
  return *this;
}

template <typename Real>
bool Tensor<Real>::has_grad() const {
  return impl_ && !impl_->grad.empty();
}

template <typename Real>
std::span<const Real> Tensor<Real>::grad() const {
  if (!has_grad()) throw UsageError("tensor: no gradient has been computed");
  return impl_->grad;
}

template <typename Real>
std::span<Real> Tensor<Real>::mutable_grad() {
  if (!impl_) throw UsageError("tensor: use of undefined tensor");
  return impl_->grad_buffer();
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  if (impl_) impl_->grad.clear();
}

template <typename Real>
std::int64_t Tensor<Real>::node_id() const {
  return impl_ ? impl_->node_id : -1;
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone() const {
  return Tensor(shape(), impl_->data);
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  return clone();
}

template <typename Real>
Tape<Real>& Tape<Real>::current() {
  thread_local Tape<Real> tape;
  return tape;
}

template <typename Real>
void Tape<Real>::record(Tensor<Real>& out, std::vector<Tensor<Real>> parents, BackwardFn fn) {
  if (!GradMode::enabled()) return;
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const Tensor<Real>& p) { return p.requires_grad(); });
  if (!any) return;
  Node node;
  node.output = out.impl_ptr();
  node.parents.reserve(parents.size());
  for (auto& p : parents) node.parents.push_back(p.impl_ptr());
  node.fn = std::move(fn);
  out.impl()->requires_grad = true;
  out.impl()->node_id = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(std::move(node));
}

template <typename Real>
void Tape<Real>::backward(const Tensor<Real>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward: loss must be a scalar, got " +
                     (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
  }
  if (nodes_.empty()) throw UsageError("backward: tape is empty");
  const auto id = loss.node_id();
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size() || nodes_[id].output != loss.impl_ptr()) {
    throw UsageError("backward: loss was not produced on the current tape");
  }
  loss.impl()->grad_buffer()[0] = Real(1);
  for (std::int64_t i = id; i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (node.output->grad.empty()) continue;  // not reachable from the loss
    node.fn(*node.output, node.parents);
  }
  clear();
}

template <typename Real>
void Tape<Real>::clear() {
  for (auto& node : nodes_) node.output->node_id = -1;
  nodes_.clear();
}

template struct TensorImpl<float>;
template struct TensorImpl<double>;
template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace dstf
