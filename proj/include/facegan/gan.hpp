#pragma once

#include <random>

#include "facegan/config.hpp"
#include "facegan/discriminator.hpp"
#include "facegan/generator.hpp"
#include "facegan/losses.hpp"
#include "facegan/lpips.hpp"

namespace facegan {

/// Generator, multi-scale discriminator and loss stack of the RGBD cGAN.
class RgbdGan {
 public:
  RgbdGan(const GeneratorConfig& generator, const DiscriminatorConfig& discriminator,
          const LossWeights& weights, const LpipsNetwork* lpips,
          double discriminator_loss_factor = 0.5);

  /// Initializes all convolution weights from N(0, stddev^2).
  void init(std::uint64_t seed, double stddev = 0.02);

  /// Discriminator loss on (x, y) vs. (x, fake); accumulates D gradients.
  DiscriminatorLoss discriminator_loss(const nn::Tensor& flm, const nn::Tensor& real,
                                       const nn::Tensor& fake, bool accumulate);

  /// Generator loss for the output recorded in `trace`; accumulates G
  /// gradients (D gradients are left untouched).
  GeneratorLoss generator_loss(const nn::Tensor& flm, const nn::Tensor& real,
                               const nn::GeneratorTrace& trace, bool accumulate);

  nn::Generator& generator() { return generator_; }
  const nn::Generator& generator() const { return generator_; }
  nn::MultiScaleDiscriminator& discriminator() { return discriminator_; }
  const nn::MultiScaleDiscriminator& discriminator() const { return discriminator_; }
  const LossWeights& weights() const { return weights_; }
  void set_weights(const LossWeights& w) { weights_ = w; }
  double discriminator_loss_factor() const { return d_factor_; }
  void set_discriminator_loss_factor(double f) { d_factor_ = f; }
  const LpipsNetwork* lpips() const { return lpips_; }

 private:
  nn::Generator generator_;
  nn::MultiScaleDiscriminator discriminator_;
  LossWeights weights_;
  const LpipsNetwork* lpips_;
  double d_factor_;
};

}  // namespace facegan
