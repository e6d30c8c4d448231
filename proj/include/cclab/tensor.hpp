#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "cclab/rng.hpp"

namespace cclab {

// Reverse-mode autodiff over dense row-major tensors. A Tensor is a cheap
// handle onto shared storage plus an optional graph node; ops record a
// backward closure and hold their inputs alive through `parents`. One graph
// belongs to one logical thread; kernels may parallelize internally.
template <class T>
struct TensorImpl {
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;  // sized on demand
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void()> backward;
};

bool grad_enabled() noexcept;
void set_grad_enabled(bool on) noexcept;

// RAII guard: disables graph recording in scope (evaluation passes).
struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) {
      throw std::runtime_error("tensor: negative dimension");
    }
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

template <class T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(shape_numel(t.impl_->shape), T(0));
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor full(std::vector<int> shape, T value, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.impl_->data) {
      v = value;
    }
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != shape_numel(shape)) {
      throw std::runtime_error("tensor: data length does not match shape");
    }
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor randn(std::vector<int> shape, Rng& rng, T stddev, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.impl_->data) {
      v = static_cast<T>(rng.normal()) * stddev;
    }
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  std::size_t numel() const { return impl_->data.size(); }

  // Row count / row width for the common [rows × cols] layout.
  int rows() const { return impl_->shape.empty() ? 0 : impl_->shape[0]; }
  int cols() const {
    if (impl_->shape.size() != 2) {
      throw std::runtime_error("tensor: cols() on non-2d tensor");
    }
    return impl_->shape[1];
  }

  std::span<T> values() { return {impl_->data.data(), impl_->data.size()}; }
  std::span<const T> values() const { return {impl_->data.data(), impl_->data.size()}; }
  T* data() { return impl_->data.data(); }
  const T* data() const { return impl_->data.data(); }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  std::span<T> grad() {
    ensure_grad();
    return {impl_->grad.data(), impl_->grad.size()};
  }
  std::span<const T> grad() const { return {impl_->grad.data(), impl_->grad.size()}; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  void ensure_grad() {
    if (impl_->grad.size() != impl_->data.size()) {
      impl_->grad.assign(impl_->data.size(), T(0));
    }
  }
  void zero_grad() {
    if (!impl_->grad.empty()) {
      std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
    }
  }

  T item() const {
    if (numel() != 1) {
      throw std::runtime_error("tensor: item() requires a single element");
    }
    return impl_->data[0];
  }

  // Detached copy of the same values (no graph, no grad requirement).
  Tensor detach() const { return from(impl_->shape, impl_->data, false); }

  void backward(T seed = T(1)) const {
    if (!impl_->requires_grad) {
      throw std::runtime_error("backward: tensor does not require grad");
    }
    if (numel() != 1) {
      throw std::runtime_error("backward: implicit seed requires a scalar output");
    }
    std::vector<TensorImpl<T>*> order;
    topo_sort(order);
    ensure_grad_of(impl_.get());
    impl_->grad[0] += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward) {
        (*it)->backward();
      }
    }
  }

  std::shared_ptr<TensorImpl<T>>& impl() { return impl_; }
  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

  static void ensure_grad_of(TensorImpl<T>* node) {
    if (node->grad.size() != node->data.size()) {
      node->grad.assign(node->data.size(), T(0));
    }
  }

 private:
  void topo_sort(std::vector<TensorImpl<T>*>& order) const {
    // Iterative DFS; graphs from long sequences would overflow the call stack.
    struct Frame {
      TensorImpl<T>* node;
      std::size_t next_parent;
    };
    std::vector<Frame> stack;
    std::unordered_set<const TensorImpl<T>*> visited;
    stack.push_back({impl_.get(), 0});
    visited.insert(impl_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        TensorImpl<T>* p = f.node->parents[f.next_parent++].get();
        if (visited.insert(p).second) {
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
    for (TensorImpl<T>* n : order) {
      if (n->requires_grad || n->backward) {
        ensure_grad_of(n);
      }
    }
  }

  std::shared_ptr<TensorImpl<T>> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace cclab
