#include "facegan/losses.hpp"

#include <cmath>

#include "facegan/errors.hpp"

namespace facegan {
namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// mean((s - target)^2); gradient scaled by `scale` written to `grad`.
double mean_squared(const nn::Tensor& s, double target, double scale,
                    nn::Tensor* grad) {
  const double n = static_cast<double>(s.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = s[i] - target;
    sum += d * d;
  }
  if (grad != nullptr) {
    *grad = nn::Tensor(s.shape());
    for (std::size_t i = 0; i < s.size(); ++i) {
      (*grad)[i] = scale * 2.0 * (s[i] - target) / n;
    }
  }
  return sum / n;
}

FeatureGrads empty_grads(const nn::PatchResponse& r) {
  FeatureGrads g(r.num_scales());
  for (std::size_t k = 0; k < r.num_scales(); ++k) {
    g[k].resize(r.scales[k].features.size());
  }
  return g;
}

nn::Tensor rgb_of(const nn::Tensor& rgbd, int n) {
  return nn::slice_channels(nn::slice_batch(rgbd, n), 0, 3);
}

}  // namespace

DiscriminatorLoss loss_discriminator(const nn::PatchResponse& real,
                                     const nn::PatchResponse& fake,
                                     double factor, FeatureGrads* d_real,
                                     FeatureGrads* d_fake) {
  if (real.num_scales() != fake.num_scales()) {
    throw ContractError("loss_discriminator: scale count mismatch");
  }
  DiscriminatorLoss loss;
  loss.factor = factor;
  if (d_real) *d_real = empty_grads(real);
  if (d_fake) *d_fake = empty_grads(fake);
  double sum = 0.0;
  for (std::size_t k = 0; k < real.num_scales(); ++k) {
    const double r = mean_squared(real.scores(k), 1.0, factor,
                                  d_real ? &(*d_real)[k].back() : nullptr);
    const double f = mean_squared(fake.scores(k), 0.0, factor,
                                  d_fake ? &(*d_fake)[k].back() : nullptr);
    loss.real += r;
    loss.fake += f;
    loss.per_scale.push_back(r + f);
    sum += r + f;
  }
  loss.total = factor * sum;
  return loss;
}

GeneratorLoss loss_generator(const nn::Tensor& real_rgbd,
                             const nn::Tensor& fake_rgbd,
                             const nn::PatchResponse& real_response,
                             const nn::PatchResponse& fake_response,
                             const LossWeights& weights,
                             const LpipsNetwork* lpips,
                             GeneratorLossGrads* grads) {
  if (real_rgbd.shape() != fake_rgbd.shape() || real_rgbd.c() != 4) {
    throw ContractError("loss_generator: expected matching 4-channel images");
  }
  if (real_response.num_scales() != fake_response.num_scales()) {
    throw ContractError("loss_generator: scale count mismatch");
  }
  if (weights.lambda_lpips != 0.0 && lpips == nullptr) {
    throw ContractError(
        "loss_generator: perceptual metric unavailable with lambda_lpips != 0");
  }
  GeneratorLoss loss;
  if (grads) {
    grads->d_fake_features = empty_grads(fake_response);
    grads->d_output = nn::Tensor(fake_rgbd.shape());
  }

  for (std::size_t k = 0; k < fake_response.num_scales(); ++k) {
    const auto& fake_feats = fake_response.scales[k].features;
    const auto& real_feats = real_response.scales[k].features;
    loss.gan += mean_squared(fake_response.scores(k), 1.0, 1.0,
                             grads ? &grads->d_fake_features[k].back() : nullptr);

    const std::size_t blocks = fake_feats.size() - 1;
    double fm = 0.0;
    for (std::size_t j = 0; j < blocks; ++j) {
      const nn::Tensor& a = fake_feats[j];
      const nn::Tensor& b = real_feats[j];
      const double n = static_cast<double>(a.size());
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
      fm += s / n;
      if (grads) {
        nn::Tensor g(a.shape());
        const double scale = weights.lambda_fm / (n * static_cast<double>(blocks));
        for (std::size_t i = 0; i < a.size(); ++i) g[i] = scale * sign(a[i] - b[i]);
        grads->d_fake_features[k][j] = std::move(g);
      }
    }
    loss.raw_feature_matching += fm / static_cast<double>(blocks);
  }
  loss.feature_matching = weights.lambda_fm * loss.raw_feature_matching;

  const double numel = static_cast<double>(fake_rgbd.size());
  double l1 = 0.0;
  for (std::size_t i = 0; i < fake_rgbd.size(); ++i) {
    const double d = fake_rgbd[i] - real_rgbd[i];
    l1 += std::abs(d);
    if (grads) grads->d_output[i] += weights.lambda_l1 * sign(d) / numel;
  }
  loss.raw_l1 = l1 / numel;
  loss.l1 = weights.lambda_l1 * loss.raw_l1;

  if (lpips != nullptr && weights.lambda_lpips != 0.0) {
    const int batch = fake_rgbd.n();
    double sum = 0.0;
    for (int n = 0; n < batch; ++n) {
      const nn::Tensor real_rgb = rgb_of(real_rgbd, n);
      const nn::Tensor fake_rgb = rgb_of(fake_rgbd, n);
      if (grads) {
        nn::Tensor d_rgb;
        sum += lpips->distance_with_grad(real_rgb, fake_rgb, d_rgb);
        const double scale = weights.lambda_lpips / batch;
        for (int c = 0; c < 3; ++c) {
          const double* src = d_rgb.plane(0, c);
          double* dst = grads->d_output.plane(n, c);
          for (std::size_t i = 0; i < d_rgb.shape().plane(); ++i) {
            dst[i] += scale * src[i];
          }
        }
      } else {
        sum += lpips->distance(real_rgb, fake_rgb);
      }
    }
    loss.raw_lpips = sum / batch;
    loss.lpips = weights.lambda_lpips * loss.raw_lpips;
  }
  return loss;
}

}  // namespace facegan
