#include "facegan/gan.hpp"

#include "facegan/optimizer.hpp"

namespace facegan {

RgbdGan::RgbdGan(const GeneratorConfig& generator,
                 const DiscriminatorConfig& discriminator, const LossWeights& weights,
                 const LpipsNetwork* lpips, double discriminator_loss_factor)
    : generator_(generator),
      discriminator_(discriminator),
      weights_(weights),
      lpips_(lpips),
      d_factor_(discriminator_loss_factor) {
  weights_.validate();
}

void RgbdGan::init(std::uint64_t seed, double stddev) {
  init_weights(generator_.parameters(), seed, stddev);
  init_weights(discriminator_.parameters(), seed ^ 0x9e3779b97f4a7c15ULL, stddev);
}

DiscriminatorLoss RgbdGan::discriminator_loss(const nn::Tensor& flm,
                                              const nn::Tensor& real,
                                              const nn::Tensor& fake, bool accumulate) {
  const nn::PatchResponse real_response = discriminator_.forward(real, flm);
  const nn::PatchResponse fake_response = discriminator_.forward(fake, flm);
  if (!accumulate) return loss_discriminator(real_response, fake_response, d_factor_);
  FeatureGrads d_real, d_fake;
  DiscriminatorLoss loss =
      loss_discriminator(real_response, fake_response, d_factor_, &d_real, &d_fake);
  discriminator_.backward(real_response, d_real, {true, false});
  discriminator_.backward(fake_response, d_fake, {true, false});
  return loss;
}

GeneratorLoss RgbdGan::generator_loss(const nn::Tensor& flm, const nn::Tensor& real,
                                      const nn::GeneratorTrace& trace, bool accumulate) {
  const nn::Tensor& fake = trace.output;
  const nn::PatchResponse real_response = discriminator_.forward(real, flm);
  const nn::PatchResponse fake_response = discriminator_.forward(fake, flm);
  if (!accumulate) {
    return loss_generator(real, fake, real_response, fake_response, weights_, lpips_);
  }
  GeneratorLossGrads grads;
  GeneratorLoss loss = loss_generator(real, fake, real_response, fake_response,
                                      weights_, lpips_, &grads);
  nn::Tensor d_fake =
      discriminator_.backward(fake_response, grads.d_fake_features, {false, true});
  d_fake += grads.d_output;
  generator_.backward(trace, d_fake, {true, false});
  return loss;
}

}  // namespace facegan
