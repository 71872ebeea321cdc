#include "facegan/layers.hpp"

#include <Eigen/Core>
#include <cmath>

#include "facegan/errors.hpp"

namespace facegan::nn {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Unfold one sample [C, H, W] into [C*k*k, out_h*out_w].
void im2col(const double* src, int channels, int height, int width,
            int kernel, int stride, int padding, int out_h, int out_w,
            double* cols) {
  const int out_plane = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    const double* plane = src + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        double* row = cols + (static_cast<std::size_t>(c) * kernel * kernel +
                              ky * kernel + kx) *
                                 out_plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - padding + ky;
          double* dst = row + oy * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, 0.0);
            continue;
          }
          const double* line = plane + static_cast<std::size_t>(iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - padding + kx;
            dst[ox] = (ix >= 0 && ix < width) ? line[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Inverse of im2col: scatter-add columns back into [C, H, W].
void col2im(const double* cols, int channels, int height, int width,
            int kernel, int stride, int padding, int out_h, int out_w,
            double* dst) {
  const int out_plane = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    double* plane = dst + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const double* row =
            cols + (static_cast<std::size_t>(c) * kernel * kernel +
                    ky * kernel + kx) *
                       out_plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= height) continue;
          const double* src = row + oy * out_w;
          double* line = plane + static_cast<std::size_t>(iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - padding + kx;
            if (ix >= 0 && ix < width) line[ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_spec(const ConvSpec& s) {
  if (s.in_channels <= 0 || s.out_channels <= 0 || s.kernel <= 0 ||
      s.stride <= 0 || s.padding < 0) {
    throw ConfigError("invalid convolution spec");
  }
}

}  // namespace

int conv_output_size(int input, int kernel, int stride, int padding) {
  return (input + 2 * padding - kernel) / stride + 1;
}

int conv_transpose_output_size(int input, int kernel, int stride,
                               int padding) {
  return (input - 1) * stride - 2 * padding + kernel;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const std::string& name, ConvSpec s)
    : spec(s),
      weight(name + ".weight",
             {s.out_channels, s.in_channels, s.kernel, s.kernel}),
      bias(name + ".bias", {1, s.out_channels, 1, 1}) {
  check_spec(s);
}

Shape Conv2d::output_shape(const Shape& in) const {
  return {in.n, spec.out_channels,
          conv_output_size(in.h, spec.kernel, spec.stride, spec.padding),
          conv_output_size(in.w, spec.kernel, spec.stride, spec.padding)};
}

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.c() != spec.in_channels) {
    throw ContractError("Conv2d " + weight.name + ": expected " +
                        std::to_string(spec.in_channels) +
                        " input channels, got " + x.shape().str());
  }
  const Shape out_shape = output_shape(x.shape());
  if (out_shape.h <= 0 || out_shape.w <= 0) {
    throw ContractError("Conv2d " + weight.name + ": input " +
                        x.shape().str() + " too small");
  }
  Tensor y(out_shape);
  const int k2 = spec.in_channels * spec.kernel * spec.kernel;
  const int out_plane = out_shape.h * out_shape.w;
  AlignedBuffer cols(static_cast<std::size_t>(k2) * out_plane);
  ConstMatrixMap w(weight.value.data(), spec.out_channels, k2);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.plane(n, 0), x.c(), x.h(), x.w(), spec.kernel, spec.stride,
           spec.padding, out_shape.h, out_shape.w, cols.data());
    MatrixMap out(y.plane(n, 0), spec.out_channels, out_plane);
    out.noalias() = w * ConstMatrixMap(cols.data(), k2, out_plane);
    for (int c = 0; c < spec.out_channels; ++c) {
      out.row(c).array() += bias.value[c];
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& dy, Backprop mode) {
  const Shape out_shape = output_shape(x.shape());
  if (dy.shape() != out_shape) {
    throw ContractError("Conv2d backward: gradient shape " +
                        dy.shape().str() + " != " + out_shape.str());
  }
  const int k2 = spec.in_channels * spec.kernel * spec.kernel;
  const int out_plane = out_shape.h * out_shape.w;
  AlignedBuffer cols(static_cast<std::size_t>(k2) * out_plane);
  Tensor dx;
  if (mode.input) dx = Tensor(x.shape());
  ConstMatrixMap w(weight.value.data(), spec.out_channels, k2);
  MatrixMap dw(weight.grad.data(), spec.out_channels, k2);
  for (int n = 0; n < x.n(); ++n) {
    ConstMatrixMap g(dy.plane(n, 0), spec.out_channels, out_plane);
    if (mode.params) {
      im2col(x.plane(n, 0), x.c(), x.h(), x.w(), spec.kernel, spec.stride,
             spec.padding, out_shape.h, out_shape.w, cols.data());
      dw.noalias() += g * ConstMatrixMap(cols.data(), k2, out_plane).transpose();
      for (int c = 0; c < spec.out_channels; ++c) {
        bias.grad[c] += g.row(c).sum();
      }
    }
    if (mode.input) {
      MatrixMap dcols(cols.data(), k2, out_plane);
      dcols.noalias() = w.transpose() * g;
      col2im(cols.data(), x.c(), x.h(), x.w(), spec.kernel, spec.stride,
             spec.padding, out_shape.h, out_shape.w, dx.plane(n, 0));
    }
  }
  return dx;
}

Tensor Conv2d::backward_input(const Tensor& x, const Tensor& dy) const {
  const Shape out_shape = output_shape(x.shape());
  if (dy.shape() != out_shape) {
    throw ContractError("Conv2d backward: gradient shape " +
                        dy.shape().str() + " != " + out_shape.str());
  }
  const int k2 = spec.in_channels * spec.kernel * spec.kernel;
  const int out_plane = out_shape.h * out_shape.w;
  AlignedBuffer cols(static_cast<std::size_t>(k2) * out_plane);
  Tensor dx(x.shape());
  ConstMatrixMap w(weight.value.data(), spec.out_channels, k2);
  for (int n = 0; n < x.n(); ++n) {
    MatrixMap dcols(cols.data(), k2, out_plane);
    dcols.noalias() =
        w.transpose() * ConstMatrixMap(dy.plane(n, 0), spec.out_channels, out_plane);
    col2im(cols.data(), x.c(), x.h(), x.w(), spec.kernel, spec.stride,
           spec.padding, out_shape.h, out_shape.w, dx.plane(n, 0));
  }
  return dx;
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(const std::string& name, ConvSpec s)
    : spec(s),
      weight(name + ".weight",
             {s.in_channels, s.out_channels, s.kernel, s.kernel}),
      bias(name + ".bias", {1, s.out_channels, 1, 1}) {
  check_spec(s);
}

Shape ConvTranspose2d::output_shape(const Shape& in) const {
  return {in.n, spec.out_channels,
          conv_transpose_output_size(in.h, spec.kernel, spec.stride,
                                     spec.padding),
          conv_transpose_output_size(in.w, spec.kernel, spec.stride,
                                     spec.padding)};
}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
  if (x.c() != spec.in_channels) {
    throw ContractError("ConvTranspose2d " + weight.name + ": expected " +
                        std::to_string(spec.in_channels) +
                        " input channels, got " + x.shape().str());
  }
  const Shape out_shape = output_shape(x.shape());
  Tensor y(out_shape);
  const int k2 = spec.out_channels * spec.kernel * spec.kernel;
  const int in_plane = x.h() * x.w();
  AlignedBuffer cols(static_cast<std::size_t>(k2) * in_plane);
  ConstMatrixMap w(weight.value.data(), spec.in_channels, k2);
  for (int n = 0; n < x.n(); ++n) {
    MatrixMap c(cols.data(), k2, in_plane);
    c.noalias() =
        w.transpose() * ConstMatrixMap(x.plane(n, 0), spec.in_channels, in_plane);
    col2im(cols.data(), spec.out_channels, out_shape.h, out_shape.w,
           spec.kernel, spec.stride, spec.padding, x.h(), x.w(),
           y.plane(n, 0));
    for (int ch = 0; ch < spec.out_channels; ++ch) {
      double* p = y.plane(n, ch);
      const double b = bias.value[ch];
      for (std::size_t i = 0; i < out_shape.plane(); ++i) p[i] += b;
    }
  }
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& x, const Tensor& dy,
                                 Backprop mode) {
  const Shape out_shape = output_shape(x.shape());
  if (dy.shape() != out_shape) {
    throw ContractError("ConvTranspose2d backward: gradient shape " +
                        dy.shape().str() + " != " + out_shape.str());
  }
  const int k2 = spec.out_channels * spec.kernel * spec.kernel;
  const int in_plane = x.h() * x.w();
  AlignedBuffer cols(static_cast<std::size_t>(k2) * in_plane);
  Tensor dx;
  if (mode.input) dx = Tensor(x.shape());
  ConstMatrixMap w(weight.value.data(), spec.in_channels, k2);
  MatrixMap dw(weight.grad.data(), spec.in_channels, k2);
  for (int n = 0; n < x.n(); ++n) {
    im2col(dy.plane(n, 0), spec.out_channels, out_shape.h, out_shape.w,
           spec.kernel, spec.stride, spec.padding, x.h(), x.w(),
           cols.data());
    ConstMatrixMap dcols(cols.data(), k2, in_plane);
    if (mode.params) {
      dw.noalias() +=
          ConstMatrixMap(x.plane(n, 0), spec.in_channels, in_plane) *
          dcols.transpose();
      for (int ch = 0; ch < spec.out_channels; ++ch) {
        const double* p = dy.plane(n, ch);
        double s = 0.0;
        for (std::size_t i = 0; i < out_shape.plane(); ++i) s += p[i];
        bias.grad[ch] += s;
      }
    }
    if (mode.input) {
      MatrixMap out(dx.plane(n, 0), spec.in_channels, in_plane);
      out.noalias() = w * dcols;
    }
  }
  return dx;
}

// ---------------------------------------------------------- element-wise

Tensor instance_norm(const Tensor& x, NormCache& cache) {
  const std::size_t plane = x.shape().plane();
  if (plane == 0) throw ContractError("instance_norm: empty plane");
  Tensor y(x.shape());
  cache.inv_std.assign(static_cast<std::size_t>(x.n()) * x.c(), 0.0);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double* src = x.plane(n, c);
      double mean = 0.0;
      for (std::size_t i = 0; i < plane; ++i) mean += src[i];
      mean /= static_cast<double>(plane);
      double var = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = src[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(plane);
      const double inv_std = 1.0 / std::sqrt(var + kInstanceNormEps);
      cache.inv_std[static_cast<std::size_t>(n) * x.c() + c] = inv_std;
      double* dst = y.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        dst[i] = (src[i] - mean) * inv_std;
      }
    }
  }
  cache.normalized = y;
  return y;
}

Tensor instance_norm_backward(const NormCache& cache, const Tensor& dy) {
  const Tensor& xhat = cache.normalized;
  if (dy.shape() != xhat.shape()) {
    throw ContractError("instance_norm_backward: shape mismatch");
  }
  const std::size_t plane = dy.shape().plane();
  const double inv_plane = 1.0 / static_cast<double>(plane);
  Tensor dx(dy.shape());
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const double* g = dy.plane(n, c);
      const double* h = xhat.plane(n, c);
      double mean_g = 0.0;
      double mean_gh = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        mean_g += g[i];
        mean_gh += g[i] * h[i];
      }
      mean_g *= inv_plane;
      mean_gh *= inv_plane;
      const double inv_std =
          cache.inv_std[static_cast<std::size_t>(n) * dy.c() + c];
      double* out = dx.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        out[i] = inv_std * (g[i] - mean_g - h[i] * mean_gh);
      }
    }
  }
  return dx;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  }
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& dy, double slope) {
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    dx[i] = x[i] > 0.0 ? dy[i] : slope * dy[i];
  }
  return dx;
}

Tensor tanh_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

Tensor tanh_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    dx[i] = dy[i] * (1.0 - y[i] * y[i]);
  }
  return dx;
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng,
               Tensor& mask) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout rate must lie in [0, 1)");
  }
  mask = Tensor(x.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution drop(rate);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = drop(rng) ? 0.0 : keep_scale;
    y[i] = x[i] * mask[i];
  }
  return y;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& dy) {
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask[i];
  return dx;
}

Tensor avg_pool2(const Tensor& x) {
  Tensor y({x.n(), x.c(), x.h() / 2, x.w() / 2});
  if (y.h() == 0 || y.w() == 0) {
    throw ContractError("avg_pool2: input too small " + x.shape().str());
  }
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double* src = x.plane(n, c);
      double* dst = y.plane(n, c);
      for (int oy = 0; oy < y.h(); ++oy) {
        const double* r0 = src + static_cast<std::size_t>(2 * oy) * x.w();
        const double* r1 = r0 + x.w();
        for (int ox = 0; ox < y.w(); ++ox) {
          dst[oy * y.w() + ox] =
              0.25 * (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]);
        }
      }
    }
  }
  return y;
}

Tensor avg_pool2_backward(const Shape& input, const Tensor& dy) {
  Tensor dx(input);
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const double* g = dy.plane(n, c);
      double* dst = dx.plane(n, c);
      for (int oy = 0; oy < dy.h(); ++oy) {
        for (int ox = 0; ox < dy.w(); ++ox) {
          const double v = 0.25 * g[oy * dy.w() + ox];
          double* r0 = dst + static_cast<std::size_t>(2 * oy) * input.w;
          double* r1 = r0 + input.w;
          r0[2 * ox] += v;
          r0[2 * ox + 1] += v;
          r1[2 * ox] += v;
          r1[2 * ox + 1] += v;
        }
      }
    }
  }
  return dx;
}

}  // namespace facegan::nn
