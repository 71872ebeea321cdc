#include <random>

#include "doctest.h"
#include "facegan/layers.hpp"
#include "facegan/optimizer.hpp"
#include "gradcheck.hpp"

using namespace facegan;
using namespace facegan::nn;
using facegan::testing::check_gradients;
using facegan::testing::random_tensor;

namespace {

// Weighted sum so every output element carries a distinct gradient.
double weighted_sum(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

// Direct-loop convolution, independent of the im2col path.
Tensor naive_conv(const Tensor& x, const Conv2d& conv) {
  const ConvSpec& s = conv.spec;
  Tensor y(conv.output_shape(x.shape()));
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < s.out_channels; ++o)
      for (int oy = 0; oy < y.h(); ++oy)
        for (int ox = 0; ox < y.w(); ++ox) {
          double acc = conv.bias.value[o];
          for (int c = 0; c < s.in_channels; ++c)
            for (int ky = 0; ky < s.kernel; ++ky)
              for (int kx = 0; kx < s.kernel; ++kx) {
                const int iy = oy * s.stride - s.padding + ky;
                const int ix = ox * s.stride - s.padding + kx;
                if (iy < 0 || ix < 0 || iy >= x.h() || ix >= x.w()) continue;
                acc += conv.weight.value.at(o, c, ky, kx) * x.at(n, c, iy, ix);
              }
          y.at(n, o, oy, ox) = acc;
        }
  return y;
}

// Transposed convolution by scattering each input pixel.
Tensor naive_conv_transpose(const Tensor& x, const ConvTranspose2d& conv) {
  const ConvSpec& s = conv.spec;
  Tensor y(conv.output_shape(x.shape()));
  for (int n = 0; n < y.n(); ++n)
    for (int o = 0; o < s.out_channels; ++o)
      for (int i = 0; i < static_cast<int>(y.shape().plane()); ++i)
        y.plane(n, o)[i] = conv.bias.value[o];
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < s.in_channels; ++c)
      for (int iy = 0; iy < x.h(); ++iy)
        for (int ix = 0; ix < x.w(); ++ix)
          for (int o = 0; o < s.out_channels; ++o)
            for (int ky = 0; ky < s.kernel; ++ky)
              for (int kx = 0; kx < s.kernel; ++kx) {
                const int oy = iy * s.stride - s.padding + ky;
                const int ox = ix * s.stride - s.padding + kx;
                if (oy < 0 || ox < 0 || oy >= y.h() || ox >= y.w()) continue;
                y.at(n, o, oy, ox) += conv.weight.value.at(c, o, ky, kx) * x.at(n, c, iy, ix);
              }
  return y;
}

}  // namespace

TEST_CASE("conv output size arithmetic") {
  CHECK(conv_output_size(512, 4, 2, 1) == 256);
  CHECK(conv_output_size(512, 4, 2, 2) == 257);
  CHECK(conv_output_size(65, 4, 1, 2) == 66);
  CHECK(conv_transpose_output_size(256, 4, 2, 1) == 512);
}

TEST_CASE("Conv2d matches a direct loop and its gradients") {
  for (ConvSpec spec : {ConvSpec{3, 5, 4, 2, 1}, ConvSpec{2, 3, 4, 1, 2},
                        ConvSpec{4, 2, 3, 2, 1}}) {
    Conv2d conv("c", spec);
    conv.weight.value = random_tensor(conv.weight.value.shape(), 1);
    conv.bias.value = random_tensor(conv.bias.value.shape(), 2);
    Tensor x = random_tensor({2, spec.in_channels, 9, 8}, 3);
    const Tensor y = conv.forward(x);
    const Tensor ref = naive_conv(x, conv);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    const Tensor w = random_tensor(y.shape(), 4);
    conv.weight.grad.fill(0);
    conv.bias.grad.fill(0);
    const Tensor dx = conv.backward(x, w, {});
    auto r = check_gradients({&conv.weight, &conv.bias},
                             [&] { return weighted_sum(conv.forward(x), w); }, 60, 5);
    CHECK(r.max_relative_error < 1e-6);

    // Input gradient by perturbing x.
    for (int k = 0; k < 20; ++k) {
      const std::size_t idx = (k * 37) % x.size();
      const double saved = x[idx];
      x[idx] = saved + 1e-6;
      const double plus = weighted_sum(conv.forward(x), w);
      x[idx] = saved - 1e-6;
      const double minus = weighted_sum(conv.forward(x), w);
      x[idx] = saved;
      CHECK(facegan::testing::relative_error(dx[idx], (plus - minus) / 2e-6) < 1e-6);
    }
    const Tensor dx_only = conv.backward_input(x, w);
    for (std::size_t i = 0; i < dx.size(); ++i) CHECK(dx_only[i] == dx[i]);
  }
}

TEST_CASE("ConvTranspose2d matches a scatter loop and its gradients") {
  ConvTranspose2d conv("t", {3, 2, 4, 2, 1});
  conv.weight.value = random_tensor(conv.weight.value.shape(), 11);
  conv.bias.value = random_tensor(conv.bias.value.shape(), 12);
  Tensor x = random_tensor({2, 3, 5, 4}, 13);
  const Tensor y = conv.forward(x);
  CHECK(y.shape() == Shape{2, 2, 10, 8});
  const Tensor ref = naive_conv_transpose(x, conv);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));

  const Tensor w = random_tensor(y.shape(), 14);
  const Tensor dx = conv.backward(x, w, {});
  auto r = check_gradients({&conv.weight, &conv.bias},
                           [&] { return weighted_sum(conv.forward(x), w); }, 60, 15);
  CHECK(r.max_relative_error < 1e-6);
  for (int k = 0; k < 20; ++k) {
    const std::size_t idx = (k * 13) % x.size();
    const double saved = x[idx];
    x[idx] = saved + 1e-6;
    const double plus = weighted_sum(conv.forward(x), w);
    x[idx] = saved - 1e-6;
    const double minus = weighted_sum(conv.forward(x), w);
    x[idx] = saved;
    CHECK(facegan::testing::relative_error(dx[idx], (plus - minus) / 2e-6) < 1e-6);
  }
}

TEST_CASE("instance norm, activations and pooling backpropagate correctly") {
  Tensor x = random_tensor({2, 3, 4, 5}, 21);
  const Tensor w = random_tensor(x.shape(), 22);
  auto numeric = [&](auto&& f, std::size_t idx) {
    const double saved = x[idx];
    x[idx] = saved + 1e-6;
    const double plus = weighted_sum(f(), w);
    x[idx] = saved - 1e-6;
    const double minus = weighted_sum(f(), w);
    x[idx] = saved;
    return (plus - minus) / 2e-6;
  };

  NormCache cache;
  instance_norm(x, cache);
  const Tensor dn = instance_norm_backward(cache, w);
  auto norm_f = [&] {
    NormCache c;
    return instance_norm(x, c);
  };
  for (std::size_t i = 0; i < x.size(); i += 7) {
    CHECK(facegan::testing::relative_error(dn[i], numeric(norm_f, i)) < 1e-5);
  }

  const Tensor dl = leaky_relu_backward(x, w, 0.2);
  for (std::size_t i = 0; i < x.size(); i += 5) {
    CHECK(facegan::testing::relative_error(dl[i], numeric([&] { return leaky_relu(x, 0.2); }, i)) < 1e-6);
  }
  const Tensor t = tanh_forward(x);
  const Tensor dt = tanh_backward(t, w);
  for (std::size_t i = 0; i < x.size(); i += 5) {
    CHECK(facegan::testing::relative_error(dt[i], numeric([&] { return tanh_forward(x); }, i)) < 1e-6);
  }

  Tensor xp = random_tensor({1, 2, 6, 4}, 23);
  const Tensor pooled = avg_pool2(xp);
  CHECK(pooled.shape() == Shape{1, 2, 3, 2});
  CHECK(pooled.at(0, 1, 2, 1) == doctest::Approx(0.25 * (xp.at(0, 1, 4, 2) + xp.at(0, 1, 4, 3) +
                                                          xp.at(0, 1, 5, 2) + xp.at(0, 1, 5, 3))));
  const Tensor pw = random_tensor(pooled.shape(), 24);
  const Tensor dp = avg_pool2_backward(xp.shape(), pw);
  CHECK(dp.at(0, 1, 5, 3) == doctest::Approx(0.25 * pw.at(0, 1, 2, 1)));
}

TEST_CASE("dropout keeps or zeroes with inverted scaling") {
  std::mt19937_64 rng(3);
  Tensor x(Shape{1, 1, 100, 100}, 1.0);
  Tensor mask;
  const Tensor y = dropout(x, 0.5, rng, mask);
  int kept = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK((y[i] == 0.0 || y[i] == 2.0));
    kept += y[i] != 0.0;
  }
  CHECK(kept > 4700);
  CHECK(kept < 5300);
  const Tensor g = dropout_backward(mask, x);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(g[i] == y[i]);
}
