#pragma once

#include <cstdint>
#include <vector>

#include "facegan/tensor.hpp"

namespace facegan {

/// Draws every weight tensor from N(0, stddev^2) and zeroes biases.
void init_weights(const std::vector<nn::Parameter*>& params, std::uint64_t seed,
                  double stddev = 0.02);

/// Adaptive-moment gradient descent.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<nn::Parameter*> params, double beta1, double beta2,
       double eps = 1e-8);

  void step(double lr);
  void zero_grad();

  std::int64_t steps() const { return steps_; }
  std::vector<nn::Tensor>& first_moments() { return m_; }
  std::vector<nn::Tensor>& second_moments() { return v_; }
  const std::vector<nn::Tensor>& first_moments() const { return m_; }
  const std::vector<nn::Tensor>& second_moments() const { return v_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }

 private:
  std::vector<nn::Parameter*> params_;
  std::vector<nn::Tensor> m_;
  std::vector<nn::Tensor> v_;
  double beta1_ = 0.5;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t steps_ = 0;
};

/// Hash of parameter values, for cheap equality checks between states.
std::uint64_t parameter_hash(const std::vector<const nn::Parameter*>& params);

}  // namespace facegan
