#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "facegan/tensor.hpp"

namespace facegan::nn {

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 4;
  int stride = 2;
  int padding = 1;
};

int conv_output_size(int input, int kernel, int stride, int padding);
int conv_transpose_output_size(int input, int kernel, int stride,
                               int padding);

/// Which gradients a backward pass should produce.
struct Backprop {
  bool params = true;
  bool input = true;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, ConvSpec spec);

  Tensor forward(const Tensor& x) const;
  /// `x` is the input given to forward. Parameter gradients accumulate.
  Tensor backward(const Tensor& x, const Tensor& dy, Backprop mode);
  /// Input gradient only; leaves parameter gradients untouched.
  Tensor backward_input(const Tensor& x, const Tensor& dy) const;

  Shape output_shape(const Shape& in) const;

  ConvSpec spec;
  Parameter weight;  // [out, in, k, k]
  Parameter bias;    // [1, out, 1, 1]
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(const std::string& name, ConvSpec spec);

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& dy, Backprop mode);

  Shape output_shape(const Shape& in) const;

  ConvSpec spec;
  Parameter weight;  // [in, out, k, k]
  Parameter bias;    // [1, out, 1, 1]
};

/// Per-sample, per-channel normalization without affine terms.
struct NormCache {
  Tensor normalized;
  std::vector<double> inv_std;
};

inline constexpr double kInstanceNormEps = 1e-5;

Tensor instance_norm(const Tensor& x, NormCache& cache);
Tensor instance_norm_backward(const NormCache& cache, const Tensor& dy);

Tensor leaky_relu(const Tensor& x, double slope);
Tensor leaky_relu_backward(const Tensor& x, const Tensor& dy, double slope);

Tensor tanh_forward(const Tensor& x);
Tensor tanh_backward(const Tensor& y, const Tensor& dy);

/// Inverted dropout; `mask` receives the per-element scale (0 or 1/(1-p)).
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng,
               Tensor& mask);
Tensor dropout_backward(const Tensor& mask, const Tensor& dy);

/// 2x2 average pooling with stride 2.
Tensor avg_pool2(const Tensor& x);
Tensor avg_pool2_backward(const Shape& input, const Tensor& dy);

}  // namespace facegan::nn
