#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "dtnt/common.hpp"

namespace dtnt {

template <typename T> struct TensorImpl {
  std::vector<int64_t> shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily, same length as data once used
  bool requires_grad = false;
};

// Dense row-major n-dimensional array. Copying a Tensor copies the handle;
// the buffer is shared. Values are treated as immutable once an op has
// consumed them; only grad accumulates in place.
template <typename T> class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape) {
    return filled(std::move(shape), T(0));
  }

  static Tensor filled(std::vector<int64_t> shape, T value) {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(checked_numel(t.impl_->shape), value);
    return t;
  }

  static Tensor from(std::vector<int64_t> shape, std::vector<T> values) {
    if (checked_numel(shape) != static_cast<int64_t>(values.size()))
      fail_shape("tensor init: " + shape_str(shape) + " needs " +
                 std::to_string(checked_numel(shape)) + " values, got " +
                 std::to_string(values.size()));
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    return t;
  }

  static Tensor scalar(T v) { return from({1}, {v}); }

  bool defined() const { return impl_ != nullptr; }

  const std::vector<int64_t>& shape() const { return impl_->shape; }
  int64_t dim(size_t axis) const { return impl_->shape[axis]; }
  size_t rank() const { return impl_->shape.size(); }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::vector<T>& data() { return impl_->data; }
  const std::vector<T>& data() const { return impl_->data; }

  T item() const {
    if (numel() != 1) fail_shape("item() on non-scalar " + shape_str(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }

  std::vector<T>& grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
  }
  const std::vector<T>& grad_view() const { return impl_->grad; }

  void zero_grad() { impl_->grad.clear(); }

  // deep copy of values (no grad, no graph association)
  Tensor clone_values() const {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    return t;
  }

  std::shared_ptr<TensorImpl<T>> impl() const { return impl_; }

  bool same_buffer(const Tensor& other) const { return impl_ == other.impl_; }

private:
  static int64_t checked_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
      if (e <= 0) fail_shape("extent must be positive in " + shape_str(shape));
      n *= e;
    }
    return n;
  }

  std::shared_ptr<TensorImpl<T>> impl_;
};

// Reverse-mode tape: ops append a backward closure in execution order and
// backward() replays them reversed. One tape per logical thread; the active
// tape is thread-local and installed with TapeScope.
template <typename T> class Tape {
public:
  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }

  void replay_reverse() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  static Tape*& current() {
    thread_local Tape* cur = nullptr;
    return cur;
  }

private:
  std::vector<std::function<void()>> nodes_;
};

template <typename T> class TapeScope {
public:
  explicit TapeScope(Tape<T>& tape) : prev_(Tape<T>::current()) {
    Tape<T>::current() = &tape;
  }
  ~TapeScope() { Tape<T>::current() = prev_; }

  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

private:
  Tape<T>* prev_;
};

inline std::vector<int64_t> row_major_strides(const std::vector<int64_t>& shape) {
  std::vector<int64_t> st(shape.size(), 1);
  for (size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
  return st;
}

}  // namespace dtnt
