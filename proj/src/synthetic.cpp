#include "facegan/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <opencv2/imgproc.hpp>

#include "facegan/dataset.hpp"
#include "facegan/errors.hpp"
#include "facegan/landmarks.hpp"

namespace facegan {
namespace {

using std::numbers::pi;

struct Eye {
  cv::Point2d center;
  double half_width;
  double half_height;
};

void eye_contour(std::vector<cv::Point2d>& pts, int first, const Eye& e) {
  const double w = e.half_width, h = e.half_height;
  const cv::Point2d c = e.center;
  pts[first + 0] = c + cv::Point2d(-w, 0);
  pts[first + 1] = c + cv::Point2d(-w / 3, -h);
  pts[first + 2] = c + cv::Point2d(w / 3, -h);
  pts[first + 3] = c + cv::Point2d(w, 0);
  pts[first + 4] = c + cv::Point2d(w / 3, h);
  pts[first + 5] = c + cv::Point2d(-w / 3, h);
}

std::vector<cv::Point> to_int(const std::vector<cv::Point2d>& pts, int begin, int end) {
  std::vector<cv::Point> out;
  for (int i = begin; i < end; ++i) out.emplace_back(cvRound(pts[i].x), cvRound(pts[i].y));
  return out;
}

}  // namespace

SyntheticFace render_synthetic_face(int width, int height, const FaceParams& p, int near_mm) {
  if (width < 32 || height < 32) throw ContractError("synthetic face needs at least 32x32");
  const double s = std::min(width, height);
  const cv::Point2d c(width / 2.0 + p.offset.x, height / 2.0 + p.offset.y);
  const double a = 0.30 * s, b = 0.40 * s;

  SyntheticFace face;
  std::vector<cv::Point2d>& pts = face.annotations;
  pts.assign(kDetectorLandmarks, {});
  for (int k = 0; k <= 16; ++k) {
    const double t = pi * k / 16.0;
    pts[k] = c + cv::Point2d(-a * 0.95 * std::cos(t), -0.05 * b + b * 0.92 * std::sin(t));
  }
  const double brow_y = c.y - 0.28 * b;
  for (int k = 0; k < 5; ++k) {
    const double u = (k - 2) / 2.0;
    pts[17 + k] = {c.x - 0.42 * a + 0.28 * a * u, brow_y - 0.05 * b * (1 - u * u)};
    pts[22 + k] = {c.x + 0.42 * a + 0.28 * a * u, brow_y - 0.05 * b * (1 - u * u)};
  }
  for (int k = 0; k < 4; ++k) pts[27 + k] = {c.x, c.y - 0.15 * b + k * 0.09 * b};
  for (int k = 0; k < 5; ++k) pts[31 + k] = {c.x + (k - 2) * 0.07 * a, c.y + 0.15 * b};
  const Eye left{{c.x - 0.40 * a, c.y - 0.15 * b}, 0.20 * a, 0.08 * b};
  const Eye right{{c.x + 0.40 * a, c.y - 0.15 * b}, 0.20 * a, 0.08 * b};
  eye_contour(pts, 36, left);
  eye_contour(pts, 42, right);
  const cv::Point2d mouth(c.x, c.y + 0.45 * b);
  const double mw = 0.38 * a, mh = 0.06 * b + 0.12 * b * p.mouth_open;
  for (int k = 0; k < 12; ++k) {
    const double t = pi - 2 * pi * k / 12.0;
    pts[48 + k] = mouth + cv::Point2d(mw * std::cos(t), -mh * std::sin(t));
  }
  const double ih = 0.01 * b + 0.11 * b * p.mouth_open;
  for (int k = 0; k < 8; ++k) {
    const double t = pi - 2 * pi * k / 8.0;
    pts[60 + k] = mouth + cv::Point2d(0.75 * mw * std::cos(t), -ih * std::sin(t));
  }

  cv::Mat color(height, width, CV_8UC3);
  cv::Mat depth(height, width, CV_16UC1);
  const double z_face = near_mm + 200.0, relief = 120.0;
  const double nose_sigma = 0.12 * a;
  const cv::Point2d nose_tip = pts[30];
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = (x - c.x) / a, dy = (y - c.y) / b;
      const double r2 = dx * dx + dy * dy;
      if (r2 >= 1.0) {
        const double g = 0.5 + 0.3 * y / height;
        color.at<cv::Vec3b>(y, x) = cv::Vec3b(cv::saturate_cast<uchar>(150 * g),
                                              cv::saturate_cast<uchar>(110 * g),
                                              cv::saturate_cast<uchar>(80 * g));
        depth.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(near_mm + 700);
        continue;
      }
      const double nz = std::sqrt(1.0 - r2);
      const double nd2 = (x - nose_tip.x) * (x - nose_tip.x) + (y - nose_tip.y) * (y - nose_tip.y);
      const double nose = 25.0 * std::exp(-nd2 / (2 * nose_sigma * nose_sigma));
      depth.at<std::uint16_t>(y, x) =
          static_cast<std::uint16_t>(std::lround(z_face - relief * nz - nose));
      const double shade = p.brightness * (0.55 + 0.45 * nz);
      color.at<cv::Vec3b>(y, x) = cv::Vec3b(cv::saturate_cast<uchar>(120 * shade),
                                            cv::saturate_cast<uchar>(150 * shade),
                                            cv::saturate_cast<uchar>(205 * shade));
    }
  }

  const int thick = std::max(1, static_cast<int>(std::lround(s / 96.0)));
  cv::polylines(color, to_int(pts, 17, 22), false, cv::Scalar(40, 50, 70), thick + 1);
  cv::polylines(color, to_int(pts, 22, 27), false, cv::Scalar(40, 50, 70), thick + 1);
  cv::polylines(color, to_int(pts, 27, 31), false, cv::Scalar(80, 100, 150), thick);
  cv::polylines(color, to_int(pts, 31, 36), false, cv::Scalar(60, 80, 130), thick);
  for (const Eye* e : {&left, &right}) {
    const int first = e == &left ? 36 : 42;
    cv::fillConvexPoly(color, to_int(pts, first, first + 6), cv::Scalar(235, 240, 240));
    const cv::Point2d iris =
        e->center + cv::Point2d(p.gaze.x * 0.5 * e->half_width, p.gaze.y * 0.4 * e->half_height);
    const int r = std::max(2, static_cast<int>(std::lround(0.9 * e->half_height)));
    cv::circle(color, cv::Point(cvRound(iris.x), cvRound(iris.y)), r, cv::Scalar(60, 40, 30),
               cv::FILLED);
    (e == &left ? face.left_iris : face.right_iris) = iris;
    for (int y = static_cast<int>(e->center.y - e->half_height);
         y <= static_cast<int>(e->center.y + e->half_height); ++y)
      for (int x = static_cast<int>(e->center.x - e->half_width);
           x <= static_cast<int>(e->center.x + e->half_width); ++x)
        if (x >= 0 && y >= 0 && x < width && y < height) depth.at<std::uint16_t>(y, x) += 4;
  }
  cv::fillPoly(color, std::vector<std::vector<cv::Point>>{to_int(pts, 48, 60)},
               cv::Scalar(70, 60, 160));
  cv::fillPoly(color, std::vector<std::vector<cv::Point>>{to_int(pts, 60, 68)},
               cv::Scalar(30, 20, 40));
  cv::Mat inner = cv::Mat::zeros(height, width, CV_8UC1);
  cv::fillPoly(inner, std::vector<std::vector<cv::Point>>{to_int(pts, 60, 68)}, cv::Scalar(255));
  depth.setTo(cv::Scalar(z_face - 20), inner);

  face.raw.color = color;
  face.raw.depth = depth;
  return face;
}

FaceParams random_face_params(std::uint64_t seed, FrameId id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), 0x51u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FaceParams p;
  p.mouth_open = u(rng);
  p.gaze = {2 * u(rng) - 1, 2 * u(rng) - 1};
  p.offset = {6 * u(rng) - 3, 6 * u(rng) - 3};
  p.brightness = 0.9 + 0.2 * u(rng);
  return p;
}

void write_synthetic_dataset(const std::filesystem::path& root,
                             const SyntheticDatasetOptions& options) {
  const DatasetLayout layout{root};
  std::filesystem::create_directories(layout.raw());
  for (FrameId id = 0; id < options.count; ++id) {
    const SyntheticFace face =
        render_synthetic_face(options.width, options.height,
                              random_face_params(options.seed, id), options.near_mm);
    write_image(DatasetLayout::file(layout.raw(), id, "_color.png"), face.raw.color);
    write_image(DatasetLayout::file(layout.raw(), id, "_depth16.png"), face.raw.depth);
    std::ofstream ann(ReplayDetector::annotation_path(layout.raw(), id));
    ann.precision(17);
    for (const auto& pt : face.annotations) ann << pt.x << " " << pt.y << "\n";
    if (!ann) throw IoError("cannot write annotations for frame " + std::to_string(id));
  }
  DatasetMeta meta;
  meta.window.near_mm = options.near_mm;
  meta.calibration = StereoCalibration::identity(options.width, options.height);
  meta.save(layout.meta());
}

}  // namespace facegan
