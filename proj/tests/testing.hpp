#pragma once

// Shared helpers for the test binaries: deterministic random fills and a
// central-difference gradient checker that is independent of the autodiff
// path it verifies.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "nner/common.hpp"
#include "nner/tensor.hpp"

namespace nner::testing {

inline void fill_uniform(Tensor<double>& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
}

inline std::vector<double> random_weights(int64_t n, Rng& rng) {
  std::vector<double> w(static_cast<size_t>(n));
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

// (f(x+eps) - f(x-eps)) / 2eps with the slot restored afterwards.
inline double central_diff(double* slot, const std::function<double()>& eval, double eps) {
  const double orig = *slot;
  *slot = orig + eps;
  const double hi = eval();
  *slot = orig - eps;
  const double lo = eval();
  *slot = orig;
  return (hi - lo) / (2.0 * eps);
}

// Relative error with a unit floor: |a-b| / max(1, |a|, |b|).
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Checks every element of every listed input against central differences of
// `loss_value` (which must rerun the full forward pass). Returns the max
// relative error seen.
inline double check_gradients(const std::vector<Tensor<double>>& inputs,
                              const std::function<double()>& loss_value, double eps = 1e-5) {
  double worst = 0.0;
  for (const auto& t : inputs) {
    const auto& analytic = t.grad();
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double fd = central_diff(t.data() + i, loss_value, eps);
      worst = std::max(worst, rel_err(analytic[static_cast<size_t>(i)], fd));
    }
  }
  return worst;
}

}  // namespace nner::testing
