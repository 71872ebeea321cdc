#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "facegan/layers.hpp"

namespace facegan {

/// Learned perceptual distance over RGB images in [-1, 1].
///
/// A convolutional backbone produces feature stacks; each stack is
/// unit-normalized along channels per pixel, squared differences are
/// weighted per channel, averaged over space and summed over layers.
/// Backbone and channel weights are pluggable: `load` reads externally
/// trained weights, `random_features` builds a fixed-seed backbone that is
/// suitable for regression testing but carries no perceptual meaning.
class LpipsNetwork {
 public:
  struct Layer {
    nn::Conv2d conv;
    double slope = 0.0;          // 0 = ReLU
    std::vector<double> linear;  // non-negative per-channel weights
  };

  static LpipsNetwork random_features(std::uint64_t seed);
  static LpipsNetwork load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// a, b: [1, 3, H, W].
  double distance(const nn::Tensor& a, const nn::Tensor& b) const;
  /// Also writes dDistance/db into `d_b`.
  double distance_with_grad(const nn::Tensor& a, const nn::Tensor& b,
                            nn::Tensor& d_b) const;

  const std::vector<Layer>& layers() const { return layers_; }

 private:
  struct Features {
    std::vector<nn::Tensor> pre;       // conv outputs
    std::vector<nn::Tensor> inputs;    // conv inputs
    std::vector<nn::Tensor> features;  // activations
  };
  Features extract(const nn::Tensor& x) const;
  void check_input(const nn::Tensor& x) const;

  std::array<double, 3> shift_{};
  std::array<double, 3> scale_{1.0, 1.0, 1.0};
  std::vector<Layer> layers_;
};

}  // namespace facegan
