#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stereo/rng.hpp"
#include "stereo/tensor.hpp"

namespace stereo {

// Named registry of trainable tensors. Registration order is the
// serialization and optimizer-state order.
template <typename T>
class ParamStore {
 public:
  TensorPtr<T> add(const std::string& name, TensorPtr<T> t) {
    if (find(name)) throw UsageError("parameter registered twice: " + name);
    t->requires_grad = true;
    items_.emplace_back(name, t);
    return t;
  }

  TensorPtr<T> find(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return t;
    return nullptr;
  }

  const std::vector<std::pair<std::string, TensorPtr<T>>>& items() const { return items_; }

  void zero_grad() {
    for (auto& [n, t] : items_) t->zero_grad();
  }

  int64_t count_values() const {
    int64_t n = 0;
    for (const auto& [name, t] : items_) n += t->size();
    return n;
  }

 private:
  std::vector<std::pair<std::string, TensorPtr<T>>> items_;
};

// He-style normal init for conv / linear weights.
template <typename T>
TensorPtr<T> random_init(Shape shape, Rng& rng, double stddev) {
  auto t = Tensor<T>::zeros(shape);
  for (auto& v : t->data) v = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

}  // namespace stereo
