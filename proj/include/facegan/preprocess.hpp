#pragma once

#include <cstdint>

#include <opencv2/core.hpp>

#include "facegan/config.hpp"

namespace facegan {

using FrameId = std::int64_t;

/// Frame as delivered by the sensor: BGR color and 16-bit depth in mm.
struct RawRgbdFrame {
  cv::Mat color;  // CV_8UC3, BGR
  cv::Mat depth;  // CV_16UC1, millimeters, 0 = no measurement
  FrameId frame_id = 0;

  void validate() const;
};

/// Color plus depth window codes on one pixel grid.
struct RgbdFrame {
  cv::Mat color;   // CV_8UC3, BGR
  cv::Mat depth8;  // CV_8UC1, code = depth_mm - near_mm, 0 = invalid
  DepthWindow window;

  void validate() const;
};

/// Floating-point image with values in [-1, 1].
class NormalizedImage {
 public:
  NormalizedImage() = default;
  /// Takes a CV_64F matrix; throws if any value leaves [-1 - 1e-6, 1 + 1e-6].
  explicit NormalizedImage(cv::Mat data);

  const cv::Mat& data() const { return data_; }
  int channels() const { return data_.channels(); }

 private:
  cv::Mat data_;
};

/// Depth and color cameras plus the rigid transform from depth to color.
struct StereoCalibration {
  CameraIntrinsics depth;
  CameraIntrinsics color;
  cv::Matx33d rotation = cv::Matx33d::eye();
  cv::Vec3d translation_mm{0.0, 0.0, 0.0};

  /// Identical cameras at the given resolution.
  static StereoCalibration identity(int width, int height);
};

/// Reprojects depth onto the color pixel grid with nearest-pixel splatting.
/// Unfilled color pixels keep depth 0; collisions keep the nearer depth.
RawRgbdFrame register_depth_to_color(const RawRgbdFrame& frame,
                                     const StereoCalibration& calib);

/// Maps depth_mm in [near, near + 255] to code max(depth_mm - near, 1);
/// everything else becomes 0.
cv::Mat clip_and_quantize_depth(const cv::Mat& depth16, const DepthWindow& window);

/// v -> v / 127.5 - 1 per channel.
NormalizedImage normalize(const cv::Mat& image8);
/// Inverse of normalize with rounding and saturation to [0, 255].
cv::Mat denormalize(const NormalizedImage& image);

/// Global histogram equalization of luminance. Luma value v becomes
/// floor(255 * CDF(v)); chroma is preserved. Constant images pass through.
cv::Mat sharpen_contrast(const cv::Mat& image8);

/// Full per-frame preprocessing: registration, depth windowing, contrast
/// sharpening of the color channels.
struct ProcessedFrame {
  RgbdFrame frame;
  cv::Mat registered_depth16;
  FrameId frame_id = 0;
};

ProcessedFrame preprocess_frame(const RawRgbdFrame& raw,
                                const StereoCalibration& calib,
                                const DepthWindow& window);

}  // namespace facegan
