#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "facegan/config.hpp"
#include "facegan/preprocess.hpp"

namespace facegan {

inline constexpr int kDetectorLandmarks = 68;
inline constexpr int kLandmarkCount = 70;
/// Indices of the iris centers appended after the 68 detector points.
inline constexpr int kLeftIris = 68;
inline constexpr int kRightIris = 69;

/// 68 detector points followed by the two iris centers.
struct LandmarkSet {
  std::array<cv::Point2d, kLandmarkCount> points{};
  FrameId source_frame = 0;

  /// Throws ContractError unless every point is finite and inside [0,w)x[0,h).
  void validate(int width, int height) const;

  std::string to_text() const;
  static LandmarkSet from_text(const std::string& text, FrameId frame);
  static LandmarkSet load(const std::filesystem::path& path, FrameId frame);
  void save(const std::filesystem::path& path) const;
};

/// A frame skipped during landmark detection.
class FrameRejected : public std::runtime_error {
 public:
  FrameRejected(FrameId frame, const std::string& reason);
  FrameId frame() const { return frame_; }

 private:
  FrameId frame_;
};

/// Off-the-shelf 68-point face alignment backend.
class LandmarkDetector {
 public:
  virtual ~LandmarkDetector() = default;
  /// Empty result means no face was found.
  virtual std::optional<std::vector<cv::Point2d>> detect(const cv::Mat& color,
                                                         FrameId frame) = 0;
  /// Callers serialize detect() when false.
  virtual bool thread_safe() const { return false; }
  virtual std::string name() const = 0;
};

/// Replays stored annotations: `<dir>/<frame_id>_annot68.txt`, 68 lines "x y".
class ReplayDetector : public LandmarkDetector {
 public:
  explicit ReplayDetector(std::filesystem::path dir);
  /// In-memory annotations, keyed by frame id.
  explicit ReplayDetector(std::map<FrameId, std::vector<cv::Point2d>> annotations);

  std::optional<std::vector<cv::Point2d>> detect(const cv::Mat& color, FrameId frame) override;
  bool thread_safe() const override { return true; }
  std::string name() const override { return "replay"; }

  static std::filesystem::path annotation_path(const std::filesystem::path& dir, FrameId frame);

 private:
  std::filesystem::path dir_;
  std::map<FrameId, std::vector<cv::Point2d>> memory_;
};

/// Wraps another detector and shifts every point by an integer offset drawn
/// uniformly from the disc of the given radius. Offsets depend only on
/// (seed, frame), so results do not depend on call order.
class JitterDetector : public LandmarkDetector {
 public:
  JitterDetector(std::unique_ptr<LandmarkDetector> inner, int radius, std::uint64_t seed);

  std::optional<std::vector<cv::Point2d>> detect(const cv::Mat& color, FrameId frame) override;
  bool thread_safe() const override { return inner_->thread_safe(); }
  std::string name() const override { return "jitter"; }

 private:
  std::unique_ptr<LandmarkDetector> inner_;
  std::vector<cv::Point> offsets_;
  std::uint64_t seed_;
};

/// Builds "replay" (annotations under dataset/raw) or "jitter" (replay plus jitter).
std::unique_ptr<LandmarkDetector> make_detector(const std::string& backend,
                                                const std::filesystem::path& annotation_dir,
                                                const LandmarkConfig& cfg);

struct PupilEstimate {
  cv::Point2d center;
  double objective = 0.0;
  /// Set when the patch had no usable gradients and the centroid was returned.
  bool low_confidence = false;
};

/// Gradient-based eye center: argmax over pixels c of
/// w(c) * mean_i (d_i . g_i)^2, w(c) = 255 - smoothed(c).
PupilEstimate locate_pupil(const cv::Mat& eye_patch);

/// Bounding box of six eye-contour points, padded by 20% per side and clamped.
cv::Rect eye_patch_rect(const std::vector<cv::Point2d>& points, int first, int width, int height);

/// Detector points plus both iris centers. Throws FrameRejected when no face.
LandmarkSet detect_landmarks(const cv::Mat& color, FrameId frame, LandmarkDetector& detector);

/// Integer crop bounds; x1/y1 are exclusive pixel edges.
struct CropRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const CropRect&) const = default;
  std::string to_text() const;
  static CropRect from_text(const std::string& text);
};

struct CropOptions {
  bool square = true;
  /// Extra pixels added on every side before squaring.
  int margin = 0;
};

/// floor(min) .. ceil(max) of the landmarks, optionally squared about its center.
CropRect bounding_rect(const LandmarkSet& lms, const CropOptions& options = {});

/// Shifts the rect inside [0,width]x[0,height]; shrinks only if it cannot fit.
CropRect clamp_crop(CropRect rect, int width, int height);

/// bounding_rect followed by clamp_crop. Zero-area landmark sets are rejected.
CropRect compute_crop(const LandmarkSet& lms, int width, int height,
                      const CropOptions& options = {});

/// u = (x - x0) * size / width, v = (y - y0) * size / height.
cv::Point2d to_crop(const cv::Point2d& p, const CropRect& rect, int size);
cv::Point2d from_crop(const cv::Point2d& p, const CropRect& rect, int size);
LandmarkSet transform_landmarks(const LandmarkSet& lms, const CropRect& rect, int size);

/// Output pixel (u, v) samples source (x0 + u*w/size, y0 + v*h/size):
/// bilinear for color, nearest for depth codes.
RgbdFrame crop_resize(const RgbdFrame& frame, const CropRect& rect, int size = 512);

/// Binary 8-bit map with a filled disc (value 255) at each rounded landmark.
cv::Mat render_flm(const LandmarkSet& lms_in_crop, int size = 512, int radius = 2);

}  // namespace facegan
