#include <algorithm>
#include <cmath>
#include <vector>

#include <opencv2/imgproc.hpp>

#include "facegan/errors.hpp"
#include "facegan/landmarks.hpp"

namespace facegan {
namespace {

constexpr double kGradientPercentile = 0.30;

struct GradientSample {
  double x, y, gx, gy;
};

// Central differences inside, one-sided at the border.
double derivative(const cv::Mat& img, int y, int x, bool along_x) {
  const int n = along_x ? img.cols : img.rows;
  const int i = along_x ? x : y;
  if (n < 2) return 0.0;
  auto at = [&](int k) { return along_x ? img.at<double>(y, k) : img.at<double>(k, x); };
  if (i == 0) return at(1) - at(0);
  if (i == n - 1) return at(n - 1) - at(n - 2);
  return 0.5 * (at(i + 1) - at(i - 1));
}

}  // namespace

PupilEstimate locate_pupil(const cv::Mat& eye_patch) {
  if (eye_patch.empty()) throw ContractError("empty eye patch");
  cv::Mat gray;
  if (eye_patch.channels() == 3) {
    cv::cvtColor(eye_patch, gray, cv::COLOR_BGR2GRAY);
  } else if (eye_patch.channels() == 1) {
    gray = eye_patch;
  } else {
    throw ContractError("eye patch must be gray or BGR");
  }
  cv::Mat smooth;
  gray.convertTo(smooth, CV_64F);
  cv::GaussianBlur(smooth, smooth, cv::Size(5, 5), 1.0, 1.0);

  const int rows = smooth.rows, cols = smooth.cols;
  std::vector<double> mags;
  std::vector<GradientSample> grads;
  mags.reserve(smooth.total());
  grads.reserve(smooth.total());
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      const double gx = derivative(smooth, y, x, true);
      const double gy = derivative(smooth, y, x, false);
      const double m = std::hypot(gx, gy);
      mags.push_back(m);
      grads.push_back({double(x), double(y), gx, gy});
    }
  }
  std::vector<double> sorted = mags;
  const auto k = static_cast<std::size_t>(kGradientPercentile * (sorted.size() - 1));
  std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end());
  const double threshold = sorted[k];

  std::vector<GradientSample> kept;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (mags[i] <= 0.0 || mags[i] < threshold) continue;
    kept.push_back({grads[i].x, grads[i].y, grads[i].gx / mags[i], grads[i].gy / mags[i]});
  }

  PupilEstimate best;
  if (kept.empty()) {
    best.center = {(cols - 1) / 2.0, (rows - 1) / 2.0};
    best.low_confidence = true;
    return best;
  }
  best.objective = -1.0;
  for (int cy = 0; cy < rows; ++cy) {
    for (int cx = 0; cx < cols; ++cx) {
      double sum = 0.0;
      for (const auto& g : kept) {
        const double dx = g.x - cx, dy = g.y - cy;
        const double norm = std::hypot(dx, dy);
        if (norm == 0.0) continue;
        const double dot = (dx * g.gx + dy * g.gy) / norm;
        sum += dot * dot;
      }
      const double value = (255.0 - smooth.at<double>(cy, cx)) * sum / kept.size();
      if (value > best.objective) {
        best.objective = value;
        best.center = {double(cx), double(cy)};
      }
    }
  }
  return best;
}

}  // namespace facegan
