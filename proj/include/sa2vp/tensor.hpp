#pragma once

// Reverse-mode autodiff over dense tensors. A thread-local Tape records each
// primitive as a closure during forward; Tape::backward replays the closures
// in reverse, accumulating adjoints into the grad buffers of nodes that
// require them. No active tape means plain inference: nothing is recorded and
// no grad is ever touched.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "sa2vp/common.hpp"
#include "sa2vp/kernels.hpp"

namespace sa2vp {

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = std::move(shape);
    t.node_->values.assign(static_cast<size_t>(numel_of(t.node_->shape)), T(0));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (T& x : t.node_->values) x = v;
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    check(numel_of(shape) == static_cast<int64_t>(values.size()), ErrKind::shape,
          "tensor data size does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return static_cast<int64_t>(node_->values.size()); }
  int64_t dim(int i) const {
    int nd = static_cast<int>(node_->shape.size());
    return node_->shape[(i % nd + nd) % nd];
  }
  int ndim() const { return static_cast<int>(node_->shape.size()); }

  // Tensor is a shared handle onto its node; a const handle still permits
  // writing through it, mirroring shared_ptr semantics.
  std::span<T> values() const { return node_->values; }
  T* data() const { return node_->values.data(); }

  T item() const {
    check(numel() == 1, ErrKind::shape, "item() on non-scalar tensor");
    return node_->values[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) const { node_->requires_grad = rg; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_mut() const { return node_->grad; }
  void zero_grad() const { node_->grad.clear(); }

  std::shared_ptr<TensorNode<T>> node() const { return node_; }

  bool same_node(const Tensor& other) const { return node_.get() == other.node_.get(); }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {
template <typename T>
void ensure_grad(TensorNode<T>& n) {
  if (n.grad.empty()) n.grad.assign(n.values.size(), T(0));
}
}  // namespace detail

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Activates the tape for the current thread while in scope.
  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(current_ptr()) { current_ptr() = &t; }
    ~Scope() { current_ptr() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* current() { return current_ptr(); }

  void record(std::function<void()> backward_fn) { records_.push_back(std::move(backward_fn)); }

  size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  // Seeds the loss adjoint with 1 and replays every record once, newest
  // first. Recording order is topological by construction, so each node's
  // adjoint is complete before its producing op consumes it.
  void backward(const Tensor<T>& loss) {
    check(loss.numel() == 1, ErrKind::validation, "backward requires a scalar loss");
    auto node = loss.node();
    detail::ensure_grad(*node);
    node->grad[0] += T(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  }

 private:
  static Tape*& current_ptr() {
    thread_local Tape* cur = nullptr;
    return cur;
  }

  std::vector<std::function<void()>> records_;
};

namespace detail {

// An op is recorded only when a tape is active and gradient can actually flow
// to some input; frozen subgraphs cost nothing.
template <typename T, typename... Inputs>
bool should_record(const Inputs&... ins) {
  if (Tape<T>::current() == nullptr) return false;
  return (ins.requires_grad() || ...);
}

template <typename T>
void mark_output(Tensor<T>& out, bool recorded) {
  if (recorded) out.set_requires_grad(true);
}

}  // namespace detail

}  // namespace sa2vp
