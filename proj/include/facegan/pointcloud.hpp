#pragma once

#include <filesystem>
#include <vector>

#include <opencv2/core.hpp>

#include "facegan/config.hpp"
#include "facegan/preprocess.hpp"

namespace facegan {

/// Points in millimeters with parallel RGB colors.
struct PointCloud {
  std::vector<cv::Point3d> points;
  std::vector<cv::Vec3b> colors;  // R, G, B

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// z = near + code, x = (u - cx) z / fx, y = (v - cy) z / fy; code 0 skipped.
PointCloud backproject(const RgbdFrame& frame, const CameraIntrinsics& intr,
                       const DepthWindow& window);

/// Pinhole projection of a camera-space point to pixel coordinates.
cv::Point2d project(const cv::Point3d& p, const CameraIntrinsics& intr);

/// Binary little-endian PLY: float x, y, z and uchar red, green, blue.
void export_ply(const PointCloud& cloud, const std::filesystem::path& path);
/// Reads files written by export_ply.
PointCloud read_ply(const std::filesystem::path& path);

struct TurntableOptions {
  int size = 256;
  /// Pixels per millimeter; 0 fits the cloud for every angle.
  double scale = 0.0;
  /// Square splat half-width in pixels.
  int splat = 0;
  cv::Vec3b background{0, 0, 0};
};

/// Orthographic BGR preview after rotating about the vertical axis through
/// the centroid; nearest point wins per pixel.
cv::Mat render_turntable(const PointCloud& cloud, double angle_deg,
                         const TurntableOptions& options = {});

/// Scale render_turntable uses when options.scale is 0.
double turntable_fit_scale(const PointCloud& cloud, int size);

}  // namespace facegan
