#include "facegan/preprocess.hpp"

#include <array>
#include <cmath>

#include <opencv2/imgproc.hpp>

#include "facegan/errors.hpp"

namespace facegan {
namespace {

constexpr double kNormalizedSlack = 1e-6;

// floor(255 * CDF) lookup for an 8-bit single-channel image.
std::array<std::uint8_t, 256> equalization_table(const cv::Mat& channel) {
  std::array<std::uint64_t, 256> hist{};
  for (int y = 0; y < channel.rows; ++y) {
    const auto* row = channel.ptr<std::uint8_t>(y);
    for (int x = 0; x < channel.cols; ++x) ++hist[row[x]];
  }
  const auto total = static_cast<std::uint64_t>(channel.total());
  std::array<std::uint8_t, 256> table{};
  std::uint64_t cumulative = 0;
  for (int v = 0; v < 256; ++v) {
    cumulative += hist[v];
    table[v] = static_cast<std::uint8_t>((255 * cumulative) / total);
  }
  return table;
}

bool is_constant(const cv::Mat& channel) {
  double lo = 0.0, hi = 0.0;
  cv::minMaxLoc(channel, &lo, &hi);
  return lo == hi;
}

}  // namespace

void RawRgbdFrame::validate() const {
  if (color.empty() || depth.empty()) throw ContractError("raw frame has empty images");
  if (color.type() != CV_8UC3) throw ContractError("raw color must be 8-bit 3-channel");
  if (depth.type() != CV_16UC1) throw ContractError("raw depth must be 16-bit 1-channel");
}

void RgbdFrame::validate() const {
  if (color.type() != CV_8UC3 || depth8.type() != CV_8UC1) {
    throw ContractError("RGBD frame expects 8-bit BGR color and 8-bit depth");
  }
  if (color.size() != depth8.size()) {
    throw ContractError("RGBD frame color and depth sizes differ");
  }
}

NormalizedImage::NormalizedImage(cv::Mat data) : data_(std::move(data)) {
  if (data_.depth() != CV_64F) throw ContractError("normalized image must be CV_64F");
  double lo = 0.0, hi = 0.0;
  cv::minMaxLoc(data_.reshape(1), &lo, &hi);
  if (!data_.empty() && (lo < -1.0 - kNormalizedSlack || hi > 1.0 + kNormalizedSlack)) {
    throw ContractError("normalized image leaves [-1, 1]");
  }
}

StereoCalibration StereoCalibration::identity(int width, int height) {
  StereoCalibration c;
  c.depth = CameraIntrinsics::synthetic(width, height);
  c.color = c.depth;
  return c;
}

RawRgbdFrame register_depth_to_color(const RawRgbdFrame& frame,
                                     const StereoCalibration& calib) {
  frame.validate();
  calib.depth.validate();
  calib.color.validate();
  if (calib.depth.width != frame.depth.cols || calib.depth.height != frame.depth.rows) {
    throw ConfigError("depth calibration is for " + std::to_string(calib.depth.width) + "x" +
                      std::to_string(calib.depth.height) + " but depth image is " +
                      std::to_string(frame.depth.cols) + "x" + std::to_string(frame.depth.rows));
  }
  if (calib.color.width != frame.color.cols || calib.color.height != frame.color.rows) {
    throw ConfigError("color calibration does not match the color image size");
  }
  const CameraIntrinsics& d = calib.depth;
  const CameraIntrinsics& c = calib.color;
  cv::Mat registered = cv::Mat::zeros(frame.color.size(), CV_16UC1);
  for (int v = 0; v < frame.depth.rows; ++v) {
    const auto* row = frame.depth.ptr<std::uint16_t>(v);
    for (int u = 0; u < frame.depth.cols; ++u) {
      const double z = row[u];
      if (z == 0.0) continue;
      const cv::Vec3d p((u - d.cx) * z / d.fx, (v - d.cy) * z / d.fy, z);
      const cv::Vec3d q = calib.rotation * p + calib.translation_mm;
      if (q[2] <= 0.0) continue;
      const long iu = std::lround(c.fx * q[0] / q[2] + c.cx);
      const long iv = std::lround(c.fy * q[1] / q[2] + c.cy);
      if (iu < 0 || iv < 0 || iu >= registered.cols || iv >= registered.rows) continue;
      const double zq = std::round(q[2]);
      if (zq < 1.0 || zq > 65535.0) continue;
      auto& dst = registered.at<std::uint16_t>(static_cast<int>(iv), static_cast<int>(iu));
      const auto code = static_cast<std::uint16_t>(zq);
      if (dst == 0 || code < dst) dst = code;
    }
  }
  RawRgbdFrame out;
  out.color = frame.color.clone();
  out.depth = registered;
  out.frame_id = frame.frame_id;
  return out;
}

cv::Mat clip_and_quantize_depth(const cv::Mat& depth16, const DepthWindow& window) {
  window.validate();
  if (depth16.type() != CV_16UC1) throw ContractError("depth must be 16-bit 1-channel");
  cv::Mat out(depth16.size(), CV_8UC1);
  const int near = window.near_mm;
  const int far = window.near_mm + window.span_mm;
  for (int y = 0; y < depth16.rows; ++y) {
    const auto* src = depth16.ptr<std::uint16_t>(y);
    auto* dst = out.ptr<std::uint8_t>(y);
    for (int x = 0; x < depth16.cols; ++x) {
      const int mm = src[x];
      dst[x] = (mm < near || mm > far) ? 0 : static_cast<std::uint8_t>(std::max(mm - near, 1));
    }
  }
  return out;
}

NormalizedImage normalize(const cv::Mat& image8) {
  if (image8.depth() != CV_8U) throw ContractError("normalize expects an 8-bit image");
  cv::Mat out;
  image8.convertTo(out, CV_64F, 1.0 / 127.5, -1.0);
  return NormalizedImage(out);
}

cv::Mat denormalize(const NormalizedImage& image) {
  const cv::Mat& src = image.data();
  cv::Mat out(src.size(), CV_8UC(src.channels()));
  const int n = src.cols * src.channels();
  for (int y = 0; y < src.rows; ++y) {
    const auto* s = src.ptr<double>(y);
    auto* d = out.ptr<std::uint8_t>(y);
    for (int i = 0; i < n; ++i) {
      const double v = std::round((s[i] + 1.0) * 127.5);
      d[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return out;
}

cv::Mat sharpen_contrast(const cv::Mat& image8) {
  if (image8.type() == CV_8UC1) {
    if (is_constant(image8)) return image8.clone();
    const auto table = equalization_table(image8);
    cv::Mat out;
    cv::LUT(image8, cv::Mat(1, 256, CV_8UC1, const_cast<std::uint8_t*>(table.data())), out);
    return out;
  }
  if (image8.type() != CV_8UC3) throw ContractError("sharpen_contrast expects 8-bit gray or BGR");
  cv::Mat ycrcb;
  cv::cvtColor(image8, ycrcb, cv::COLOR_BGR2YCrCb);
  std::vector<cv::Mat> planes;
  cv::split(ycrcb, planes);
  if (is_constant(planes[0])) return image8.clone();
  const auto table = equalization_table(planes[0]);
  cv::LUT(planes[0], cv::Mat(1, 256, CV_8UC1, const_cast<std::uint8_t*>(table.data())),
          planes[0]);
  cv::merge(planes, ycrcb);
  cv::Mat out;
  cv::cvtColor(ycrcb, out, cv::COLOR_YCrCb2BGR);
  return out;
}

ProcessedFrame preprocess_frame(const RawRgbdFrame& raw, const StereoCalibration& calib,
                                const DepthWindow& window) {
  const RawRgbdFrame registered = register_depth_to_color(raw, calib);
  ProcessedFrame out;
  out.frame_id = raw.frame_id;
  out.registered_depth16 = registered.depth;
  out.frame.window = window;
  out.frame.depth8 = clip_and_quantize_depth(registered.depth, window);
  // Color only; the depth codes are metric and never equalized.
  out.frame.color = sharpen_contrast(registered.color);
  return out;
}

}  // namespace facegan
