#pragma once

#include <random>
#include <vector>

#include "facegan/config.hpp"
#include "facegan/layers.hpp"

namespace facegan::nn {

/// Activations recorded by a generator forward pass, consumed by backward.
struct GeneratorTrace {
  Tensor input;
  std::vector<Tensor> down_inputs;   // conv input of each encoder level
  std::vector<NormCache> down_norm;  // unused on first and innermost level
  std::vector<Tensor> up_inputs;     // pre-ReLU decoder input per level
  std::vector<NormCache> up_norm;    // unused on the outermost level
  std::vector<Tensor> dropout_masks; // empty when dropout was inactive
  Tensor output;
};

/// U-Net encoder/decoder mapping a 1-channel landmark map to RGBD.
///
/// Level i downsamples with a 4x4 stride-2 convolution to
/// min(base * 2^i, 8 * base) features. Decoder level i sees the
/// concatenation of the skip activation and the deeper decoder output.
/// Instance normalization follows every convolution except the first
/// encoder convolution, the innermost encoder convolution and the last
/// decoder convolution, which ends in tanh.
class Generator {
 public:
  explicit Generator(const GeneratorConfig& config);

  /// `rng` drives dropout; pass nullptr for inference (dropout off).
  Tensor forward(const Tensor& x, std::mt19937_64* rng,
                 GeneratorTrace* trace = nullptr) const;

  /// Returns dL/dx; parameter gradients accumulate into the parameters.
  Tensor backward(const GeneratorTrace& trace, const Tensor& d_output,
                  Backprop mode = {});

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void zero_grad();

  const GeneratorConfig& config() const { return config_; }
  int level_width(int level) const;
  bool has_dropout(int level) const;

 private:
  GeneratorConfig config_;
  std::vector<Conv2d> down_;
  std::vector<ConvTranspose2d> up_;
};

}  // namespace facegan::nn
