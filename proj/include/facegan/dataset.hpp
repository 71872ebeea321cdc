#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "facegan/config.hpp"
#include "facegan/preprocess.hpp"
#include "facegan/tensor.hpp"

namespace facegan {

namespace fs = std::filesystem;

/// dataset/
///   raw/        <id>_color.png  <id>_depth16.png  <id>_annot68.txt
///   processed/  <id>_color.png  <id>_depth16.png  <id>_depth8.png
///   flm/        <id>_color.png  <id>_depth8.png   <id>_flm.png  <id>_lms.txt  <id>_crop.txt
///   meta
struct DatasetLayout {
  fs::path root;

  fs::path raw() const { return root / "raw"; }
  fs::path processed() const { return root / "processed"; }
  fs::path flm() const { return root / "flm"; }
  fs::path meta() const { return root / "meta"; }

  static fs::path file(const fs::path& dir, FrameId id, const std::string& suffix);
};

/// Dataset-wide metadata stored as `key=value` lines.
struct DatasetMeta {
  DepthWindow window;
  std::optional<StereoCalibration> calibration;
  /// Pinned held-out frames; training derives a split when absent.
  std::optional<std::vector<FrameId>> test_split;

  std::string serialize() const;
  static DatasetMeta parse(const std::string& text);
  static DatasetMeta load(const fs::path& path);
  void save(const fs::path& path) const;
};

/// Sorted ids of files named `<id><suffix>` in `dir`.
std::vector<FrameId> list_frames(const fs::path& dir, const std::string& suffix);

cv::Mat read_image(const fs::path& path, int expected_type);
void write_image(const fs::path& path, const cv::Mat& image);

/// Normalized FLM x and 4-channel target y (R, G, B, D).
struct TrainingSample {
  FrameId id = 0;
  nn::Tensor flm;   // [1, 1, S, S]
  nn::Tensor rgbd;  // [1, 4, S, S]
};

nn::Tensor flm_to_tensor(const cv::Mat& flm);
/// BGR color and depth codes to a normalized [1, 4, H, W] RGBD tensor.
nn::Tensor rgbd_to_tensor(const RgbdFrame& frame);
/// Inverse of rgbd_to_tensor with rounding and saturation.
RgbdFrame tensor_to_rgbd(const nn::Tensor& rgbd, const DepthWindow& window);

TrainingSample load_sample(const DatasetLayout& layout, FrameId id);
std::vector<TrainingSample> load_samples(const DatasetLayout& layout,
                                         const std::vector<FrameId>& ids);

/// Dataset consistency check before training.
struct PreflightReport {
  std::vector<FrameId> frames;    // complete color/depth/FLM triplets
  std::vector<FrameId> rejected;  // frames skipped by landmark detection
  std::vector<std::string> problems;

  bool ok() const { return problems.empty(); }
  std::string summary() const;
};

/// Checks meta, color/depth/FLM triplets in flm/, a single square
/// resolution (equal to `expected_size` when non-zero) and pinned split ids.
PreflightReport preflight(const fs::path& root, int expected_size = 0);

/// `flm/rejected.txt`: one "<id> <reason>" line per skipped frame.
std::vector<FrameId> read_rejected(const fs::path& flm_dir);

}  // namespace facegan
