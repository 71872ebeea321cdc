#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "facegan/config.hpp"
#include "facegan/lpips.hpp"
#include "facegan/pointcloud.hpp"
#include "facegan/preprocess.hpp"

namespace facegan {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = (0.01 * 255) * (0.01 * 255);
inline constexpr double kSsimC2 = (0.03 * 255) * (0.03 * 255);

/// ITU-R 601 luma as doubles; gray input is converted unchanged.
cv::Mat luma(const cv::Mat& image8);

struct SsimResult {
  double mean = 0.0;
  /// One value per valid window center: (H - 10) x (W - 10), CV_64F.
  cv::Mat map;
};

/// Gaussian-windowed SSIM on luma over fully contained windows.
SsimResult ssim(const cv::Mat& a, const cv::Mat& b);
/// Pixels outside `mask` are blacked out in both images; the mean runs over
/// window centers inside the mask.
SsimResult ssim_masked(const cv::Mat& a, const cv::Mat& b, const cv::Mat& mask);

/// Perceptual distance of two 8-bit BGR images.
double lpips_distance(const cv::Mat& a, const cv::Mat& b, const LpipsNetwork* net);
double lpips_masked(const cv::Mat& a, const cv::Mat& b, const cv::Mat& mask,
                    const LpipsNetwork* net);

struct DepthError {
  cv::Mat error_mm;  // CV_64F, 0 outside the support
  cv::Mat support;   // CV_8U, 255 where both codes are valid (and inside the mask)
  std::size_t support_pixels = 0;
  double mae_mm = 0.0;
  double fraction_below_4mm = 0.0;
  /// Set when the supports do not overlap.
  std::optional<std::string> error;
};

DepthError depth_error_map(const cv::Mat& generated8, const cv::Mat& truth8,
                           const DepthWindow& window, const cv::Mat& mask = {});

/// Nonzero codes eroded by a disc of `radius`; pixels beyond the image count as invalid.
cv::Mat face_mask(const cv::Mat& depth8, int radius);

/// Largest JPEG quality sweep result: smallest quality whose SSIM against the
/// ground truth reaches `target`.
struct JpegEquivalent {
  int quality = 0;
  double ssim = 0.0;
  double size_ratio = 0.0;  // JPEG bytes / PNG bytes of the ground truth color
};
std::optional<JpegEquivalent> jpeg_equivalent(const cv::Mat& truth_bgr, double target_ssim);

struct EvalSample {
  FrameId id = 0;
  cv::Mat flm;
  RgbdFrame truth;
};

struct EvalRecord {
  FrameId id = 0;
  double ssim = 0.0;
  double ssim_masked = 0.0;
  double lpips = 0.0;
  double lpips_masked = 0.0;
  std::optional<double> depth_mae_mm;
  std::optional<double> depth_mae_masked_mm;
  std::optional<double> fraction_below_4mm;
  std::optional<std::string> depth_error;
  std::optional<JpegEquivalent> jpeg;
  bool best_ssim = false;
  bool worst_ssim = false;
  bool best_lpips = false;
  bool worst_lpips = false;

  std::string to_json() const;
};

struct EvalSummary {
  std::vector<EvalRecord> records;  // sorted by frame id
  double mean_ssim = 0.0;
  double mean_ssim_masked = 0.0;
  double mean_lpips = 0.0;
  double mean_lpips_masked = 0.0;
  std::optional<double> mean_depth_mae_mm;
  std::optional<double> mean_depth_mae_masked_mm;
  std::optional<double> mean_jpeg_quality;
  FrameId best_ssim = 0, worst_ssim = 0, best_lpips = 0, worst_lpips = 0;

  std::string to_json() const;
};

using Synthesizer = std::function<RgbdFrame(const EvalSample&)>;

struct EvalOptions {
  int erosion_radius = 3;
  bool jpeg_equivalence = false;
};

struct EvalOutputs {
  std::vector<RgbdFrame> generated;  // parallel to records
};

EvalSummary evaluate_dataset(const std::vector<EvalSample>& samples, const Synthesizer& synth,
                             const LpipsNetwork* lpips, const EvalOptions& options,
                             EvalOutputs* outputs = nullptr);

/// Figure grid columns, left to right.
const std::vector<std::string>& report_columns();

/// One grid row: FLM | generated | ground truth | 255(1 - SSIM) | depth error |
/// turntable 30 | turntable 90. All panels are S x S BGR.
cv::Mat figure_row(const EvalSample& sample, const RgbdFrame& generated,
                   const CameraIntrinsics& camera, const DepthWindow& window);

/// Writes summary.jsonl, figures/<id>.png and layout.json into `dir`.
void write_report(const std::filesystem::path& dir, const EvalSummary& summary,
                  const std::vector<EvalSample>& samples, const EvalOutputs& outputs,
                  const CameraIntrinsics& camera, const DepthWindow& window);

}  // namespace facegan
