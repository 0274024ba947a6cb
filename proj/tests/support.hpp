#pragma once

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "stereo/rng.hpp"
#include "stereo/tensor_ops.hpp"

namespace stereo::testing {

template <typename T>
TensorPtr<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                           bool requires_grad = false) {
  auto t = Tensor<T>::zeros(std::move(shape), requires_grad);
  for (auto& v : t->data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Central finite differences against the recorded backward pass, on a random
// subset of coordinates per input. Uses 64-bit tensors; tolerances follow
// the harness-wide convention (step 1e-4, rel. error 1e-4).
template <typename BuildFn>
void check_gradients(BuildFn&& build, const std::vector<TensorPtr<double>>& inputs, Rng& rng,
                     double step = 1e-4, double tol = 1e-4, int samples = 16) {
  for (const auto& t : inputs) t->grad.clear();
  auto loss = build();
  REQUIRE(loss->size() == 1);
  loss->backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    REQUIRE_FALSE(t->grad.empty());
    analytic.push_back(t->grad);
  }
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    const auto& t = inputs[ti];
    const auto n = static_cast<uint64_t>(t->size());
    for (int s = 0; s < samples; ++s) {
      const auto i = static_cast<size_t>(rng.next_u64() % n);
      const double orig = t->data[i];
      t->data[i] = orig + step;
      const double f_plus = build()->item();
      t->data[i] = orig - step;
      const double f_minus = build()->item();
      t->data[i] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double a = analytic[ti][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      INFO("input ", ti, " coord ", i, " analytic ", a, " numeric ", numeric);
      CHECK(std::abs(a - numeric) <= tol * denom);
    }
  }
}

// Unique scratch directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("stereomatch_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace stereo::testing
