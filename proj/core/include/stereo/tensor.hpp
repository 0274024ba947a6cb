#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stereo/errors.hpp"

namespace stereo {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s);

bool grad_enabled();
void set_grad_enabled(bool on);

// Disables graph recording in a scope (inference / validation passes).
struct NoGradGuard {
  bool prev;
  NoGradGuard();
  ~NoGradGuard();
};

template <typename T>
class Tensor;

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

// Dense row-major tensor doubling as a reverse-mode autodiff node. Ops in
// tensor_ops.hpp allocate fresh outputs and record their inputs plus a
// closure that scatters adjoints back; inputs are never mutated, so a node's
// data is stable once it participates in a graph. The recorded parent links
// form the tape: backward() walks them in topological order.
template <typename T>
class Tensor : public std::enable_shared_from_this<Tensor<T>> {
 public:
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // adjoint buffer; empty until backward (or a caller) touches it
  bool requires_grad = false;
  std::vector<TensorPtr<T>> parents;
  std::function<void()> backward_fn;

  Tensor() = default;
  Tensor(Shape s, std::vector<T> d, bool rg)
      : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
      throw ShapeError("tensor data size does not match shape " + shape_str(shape));
  }

  Tensor(const Tensor&) = delete;
  Tensor& operator=(const Tensor&) = delete;

  static TensorPtr<T> zeros(Shape s, bool requires_grad = false) {
    const size_t n = static_cast<size_t>(shape_numel(s));
    return std::make_shared<Tensor<T>>(std::move(s), std::vector<T>(n, T(0)), requires_grad);
  }
  static TensorPtr<T> full(Shape s, T value) {
    const size_t n = static_cast<size_t>(shape_numel(s));
    return std::make_shared<Tensor<T>>(std::move(s), std::vector<T>(n, value), false);
  }
  static TensorPtr<T> from_data(Shape s, std::vector<T> values, bool requires_grad = false) {
    return std::make_shared<Tensor<T>>(std::move(s), std::move(values), requires_grad);
  }
  static TensorPtr<T> scalar(T value) { return from_data({1}, {value}); }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  T item() const {
    if (size() != 1) throw UsageError("item() on non-scalar tensor " + shape_str(shape));
    return data[0];
  }

  // 3-D (C,H,W) and 4-D (N,C,H,W) accessors for spatial code paths.
  T& at3(int c, int y, int x) { return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x]; }
  T at3(int c, int y, int x) const { return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x]; }
  T& at4(int n, int c, int y, int x) {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  T at4(int n, int c, int y, int x) const {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }

  // A node participates in backward if it is a requires_grad leaf or was
  // produced by a recorded op.
  bool tracked() const { return requires_grad || !parents.empty(); }

  // Adjoint accumulation target; nullptr for nodes outside the graph.
  T* grad_acc() {
    if (!tracked()) return nullptr;
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad.data();
  }

  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  // Reverse-mode sweep from a scalar loss. Interior adjoints are reset per
  // call; requires_grad leaves accumulate across calls until zero_grad().
  void backward() {
    if (size() != 1) throw UsageError("backward expects a scalar loss, got " + shape_str(shape));
    std::vector<Tensor*> order;  // topological, parents before users
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, size_t>> stack;
    stack.emplace_back(this, 0);
    seen.insert(this);
    while (!stack.empty()) {
      Tensor* node = stack.back().first;
      size_t& next = stack.back().second;
      if (next < node->parents.size()) {
        Tensor* p = node->parents[next++].get();
        if (p->tracked() && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    for (Tensor* n : order) {
      if (!n->parents.empty())
        n->grad.assign(n->data.size(), T(0));
      else if (n->requires_grad && n->grad.empty())
        n->grad.assign(n->data.size(), T(0));
    }
    grad_acc()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward_fn) (*it)->backward_fn();
  }
};

// Records graph edges for an op output. Returns true when a backward closure
// should be attached (grad mode on and at least one input is tracked).
template <typename T>
bool wire(const TensorPtr<T>& out, std::initializer_list<TensorPtr<T>> inputs) {
  if (!grad_enabled()) return false;
  bool any = false;
  for (const auto& p : inputs) any = any || p->tracked();
  if (!any) return false;
  out->parents.assign(inputs);
  return true;
}

}  // namespace stereo
