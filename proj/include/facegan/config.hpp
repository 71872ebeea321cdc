#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace facegan {

/// Metric depth range kept after clipping; one millimeter per 8-bit code.
struct DepthWindow {
  int near_mm = 300;
  int span_mm = 255;

  void validate() const;
};

/// Pinhole intrinsics in pixels.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;
  /// Synthetic camera used when a dataset carries no calibration.
  static CameraIntrinsics synthetic(int width, int height);
};

struct GeneratorConfig {
  int in_channels = 1;
  int out_channels = 4;
  int image_size = 512;
  int base_width = 64;
  int depth = 8;
  int dropout_stages = 3;
  double dropout_rate = 0.5;

  void validate() const;
};

struct DiscriminatorConfig {
  int in_channels = 5;
  int num_scales = 3;
  int layers_per_scale = 3;
  int base_width = 64;

  void validate() const;
};

struct LossWeights {
  double lambda_fm = 10.0;
  double lambda_l1 = 100.0;
  double lambda_lpips = 10.0;

  void validate() const;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 1;
  double lr_initial = 0.0002;
  int lr_constant_epochs = 30;
  int lr_decay_epochs = 70;
  std::uint64_t seed = 0;
  /// Weights drawn from N(0, init_stddev^2).
  double init_stddev = 0.02;
  /// Training gets floor(fraction * N) samples.
  double split_train_fraction = 6.0 / 7.0;
  double discriminator_loss_factor = 0.5;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int checkpoint_every = 10;
  int keep_last = 3;

  void validate() const;
};

struct LpipsConfig {
  /// Empty selects the fixed-seed random-feature backbone.
  std::string weights_path;
  std::uint64_t seed = 1234;
};

struct LandmarkConfig {
  std::string backend = "replay";
  int flm_radius = 2;
  bool square_crop = true;
  int crop_margin_px = 1;
  int output_size = 512;
  /// Offset radius of the "jitter" backend.
  int jitter_px = 2;
  std::uint64_t jitter_seed = 7;
};

struct EvalConfig {
  int erosion_radius = 3;
  bool jpeg_equivalence = false;
};

/// Merged configuration of every pipeline stage.
struct PipelineConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  LossWeights loss;
  TrainConfig train;
  DepthWindow window;
  LpipsConfig lpips;
  LandmarkConfig landmarks;
  EvalConfig eval;
  /// Fusion camera for generated frames; zero focal length means synthetic.
  CameraIntrinsics camera;

  void validate() const;

  /// Fusion camera, falling back to the synthetic one at generator size.
  CameraIntrinsics fusion_camera() const;

  std::string serialize() const;
  static PipelineConfig parse(const std::string& text);
  static PipelineConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Small CPU-sized configuration at the given resolution.
  static PipelineConfig toy(int image_size);
};

}  // namespace facegan
