#pragma once

#include <vector>

#include "facegan/config.hpp"
#include "facegan/discriminator.hpp"
#include "facegan/lpips.hpp"

namespace facegan {

struct DiscriminatorLoss {
  /// Least-squares term per scale: mean((s_real - 1)^2) + mean(s_fake^2).
  std::vector<double> per_scale;
  double real = 0.0;  // sum over scales of the real half
  double fake = 0.0;  // sum over scales of the fake half
  double factor = 0.5;
  /// factor * sum(per_scale)
  double total = 0.0;
};

/// Gradients of a loss with respect to every block output of every scale.
using FeatureGrads = std::vector<std::vector<nn::Tensor>>;

/// Multi-scale least-squares discriminator loss with real target 1 and fake
/// target 0, scaled by `factor`. When given, `d_real`/`d_fake` receive the
/// gradients w.r.t. the score matrices (other blocks left empty).
DiscriminatorLoss loss_discriminator(const nn::PatchResponse& real,
                                     const nn::PatchResponse& fake,
                                     double factor = 0.5,
                                     FeatureGrads* d_real = nullptr,
                                     FeatureGrads* d_fake = nullptr);

/// Weighted contributions of each generator objective term.
struct GeneratorLoss {
  double gan = 0.0;
  double feature_matching = 0.0;
  double l1 = 0.0;
  double lpips = 0.0;

  // Unweighted values.
  double raw_feature_matching = 0.0;
  double raw_l1 = 0.0;
  double raw_lpips = 0.0;

  double total() const { return gan + feature_matching + l1 + lpips; }
};

struct GeneratorLossGrads {
  FeatureGrads d_fake_features;  // adversarial and feature-matching paths
  nn::Tensor d_output;           // direct L1 and perceptual paths
};

/// Generator objective: sum over scales of [mean((s_fake - 1)^2) +
/// lambda_fm * FM] + lambda_l1 * L1(y, G(x)) + lambda_lpips * LPIPS on the RGB
/// channels. FM is the mean absolute feature difference averaged over the
/// non-score blocks; real features are treated as constants.
GeneratorLoss loss_generator(const nn::Tensor& real_rgbd,
                             const nn::Tensor& fake_rgbd,
                             const nn::PatchResponse& real_response,
                             const nn::PatchResponse& fake_response,
                             const LossWeights& weights,
                             const LpipsNetwork* lpips,
                             GeneratorLossGrads* grads = nullptr);

}  // namespace facegan
