#include "facegan/optimizer.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string_view>

#include "facegan/errors.hpp"

namespace facegan {

void init_weights(const std::vector<nn::Parameter*>& params, std::uint64_t seed,
                  double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  for (nn::Parameter* p : params) {
    const bool is_bias = p->name.ends_with(".bias");
    for (double& v : p->value.values()) v = is_bias ? 0.0 : dist(rng);
  }
}

Adam::Adam(std::vector<nn::Parameter*> params, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const nn::Parameter* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step(double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    nn::Tensor& value = params_[k]->value;
    const nn::Tensor& grad = params_[k]->grad;
    nn::Tensor& m = m_[k];
    nn::Tensor& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (nn::Parameter* p : params_) p->grad.fill(0.0);
}

std::uint64_t parameter_hash(const std::vector<const nn::Parameter*>& params) {
  std::uint64_t h = 0;
  for (const nn::Parameter* p : params) {
    const std::string_view bytes(reinterpret_cast<const char*>(p->value.data()),
                                 p->value.size() * sizeof(double));
    h = h * 1099511628211ULL ^ std::hash<std::string_view>{}(bytes);
  }
  return h;
}

}  // namespace facegan
