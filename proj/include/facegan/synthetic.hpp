#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <opencv2/core.hpp>

#include "facegan/preprocess.hpp"

namespace facegan {

/// Expression and pose knobs of the parametric toy face.
struct FaceParams {
  double mouth_open = 0.3;  // 0..1
  cv::Point2d gaze;         // iris offset, fraction of the eye half-width
  cv::Point2d offset;       // head translation in pixels
  double brightness = 1.0;
};

struct SyntheticFace {
  RawRgbdFrame raw;
  std::vector<cv::Point2d> annotations;  // 68 points
  cv::Point2d left_iris;
  cv::Point2d right_iris;
};

/// Draws a head-shaped ellipsoid with eyes, brows, nose and mouth, plus a
/// consistent depth map (face between roughly near+60 and near+200 mm,
/// background beyond the window) and 68 annotations.
SyntheticFace render_synthetic_face(int width, int height, const FaceParams& params,
                                    int near_mm = 300);

/// Random expression/pose for frame `id`, reproducible from (seed, id).
FaceParams random_face_params(std::uint64_t seed, FrameId id);

struct SyntheticDatasetOptions {
  int count = 8;
  int width = 96;
  int height = 96;
  std::uint64_t seed = 1;
  int near_mm = 300;
};

/// Writes raw/ color, depth16 and annotation files plus meta.
void write_synthetic_dataset(const std::filesystem::path& root,
                             const SyntheticDatasetOptions& options);

}  // namespace facegan
