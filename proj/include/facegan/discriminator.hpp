#pragma once

#include <vector>

#include "facegan/config.hpp"
#include "facegan/layers.hpp"

namespace facegan::nn {

/// Shape of every block output of one patch discriminator, score last.
std::vector<Shape> patch_discriminator_shapes(const DiscriminatorConfig& config,
                                              const Shape& input);

struct PatchTrace {
  std::vector<Tensor> conv_inputs;
  std::vector<NormCache> norms;
  std::vector<Tensor> pre_activations;
  /// Block outputs; the last entry is the patch score matrix.
  std::vector<Tensor> features;
};

/// Single-scale patch discriminator.
///
/// Block 0: conv(s2) + LeakyReLU(0.2). Blocks 1..L-1: conv(s2) + norm +
/// LeakyReLU. Block L: conv(s1) + norm + LeakyReLU. Score block: conv(s1) to
/// one channel. All kernels are 4x4 with padding 2.
class PatchDiscriminator {
 public:
  PatchDiscriminator(const DiscriminatorConfig& config, const std::string& name);

  void forward(const Tensor& x, PatchTrace& trace) const;

  /// `d_features` holds one gradient per block output (empty = zero).
  Tensor backward(const PatchTrace& trace, const std::vector<Tensor>& d_features,
                  Backprop mode);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t block_count() const { return convs_.size(); }

 private:
  std::vector<Conv2d> convs_;
};

/// Per-scale traces of a multi-scale forward pass.
struct PatchResponse {
  std::vector<PatchTrace> scales;
  std::vector<Shape> scale_inputs;

  const Tensor& scores(std::size_t k) const { return scales[k].features.back(); }
  std::size_t num_scales() const { return scales.size(); }
};

/// Three patch discriminators fed the 5-channel RGBD+landmark stack at full,
/// half and quarter resolution (2x2 average pooling between scales).
class MultiScaleDiscriminator {
 public:
  explicit MultiScaleDiscriminator(const DiscriminatorConfig& config);

  PatchResponse forward(const Tensor& rgbd, const Tensor& flm) const;

  /// Gradients per scale and block; returns dL/d(rgbd) (first 4 channels).
  Tensor backward(const PatchResponse& response,
                  const std::vector<std::vector<Tensor>>& d_features,
                  Backprop mode);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void zero_grad();

  const DiscriminatorConfig& config() const { return config_; }
  PatchDiscriminator& scale(std::size_t k) { return scales_[k]; }

 private:
  DiscriminatorConfig config_;
  std::vector<PatchDiscriminator> scales_;
};

}  // namespace facegan::nn
