#pragma once

// Central finite differences against analytic gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "facegan/tensor.hpp"

namespace facegan::testing {

struct GradCheckResult {
  int checked = 0;
  double max_relative_error = 0.0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
  return std::abs(analytic - numeric) / denom;
}

/// `loss` re-evaluates the objective from the current parameter values.
/// Analytic gradients must already be stored in each parameter's grad.
inline GradCheckResult check_gradients(const std::vector<nn::Parameter*>& params,
                                       const std::function<double()>& loss,
                                       int samples, std::uint64_t seed,
                                       double step = 1e-6) {
  std::mt19937_64 rng(seed);
  std::size_t total = 0;
  for (const nn::Parameter* p : params) total += p->value.size();
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  GradCheckResult result;
  for (int s = 0; s < samples; ++s) {
    std::size_t flat = pick(rng);
    nn::Parameter* param = nullptr;
    for (nn::Parameter* p : params) {
      if (flat < p->value.size()) {
        param = p;
        break;
      }
      flat -= p->value.size();
    }
    double& v = param->value[flat];
    const double saved = v;
    v = saved + step;
    const double plus = loss();
    v = saved - step;
    const double minus = loss();
    v = saved;
    const double numeric = (plus - minus) / (2.0 * step);
    result.max_relative_error = std::max(
        result.max_relative_error, relative_error(param->grad[flat], numeric));
    ++result.checked;
  }
  return result;
}

inline nn::Tensor random_tensor(nn::Shape shape, std::uint64_t seed,
                                double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  nn::Tensor t(shape);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace facegan::testing
