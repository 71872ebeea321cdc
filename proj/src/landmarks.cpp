#include "facegan/landmarks.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "facegan/errors.hpp"

namespace facegan {
namespace {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<cv::Point2d> parse_points(const std::string& text, const std::string& what) {
  std::vector<cv::Point2d> pts;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    cv::Point2d p;
    if (!(ls >> p.x >> p.y)) {
      throw ValidationError(what + ": line " + std::to_string(line_no) + " is not \"x y\"");
    }
    pts.push_back(p);
  }
  return pts;
}

}  // namespace

void LandmarkSet::validate(int width, int height) const {
  for (int i = 0; i < kLandmarkCount; ++i) {
    const cv::Point2d& p = points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0.0 || p.y < 0.0 || p.x >= width ||
        p.y >= height) {
      throw ContractError("landmark " + std::to_string(i) + " (" + format_double(p.x) + ", " +
                          format_double(p.y) + ") outside " + std::to_string(width) + "x" +
                          std::to_string(height));
    }
  }
}

std::string LandmarkSet::to_text() const {
  std::string out;
  for (const auto& p : points) out += format_double(p.x) + " " + format_double(p.y) + "\n";
  return out;
}

LandmarkSet LandmarkSet::from_text(const std::string& text, FrameId frame) {
  const auto pts = parse_points(text, "landmarks of frame " + std::to_string(frame));
  if (pts.size() != kLandmarkCount) {
    throw ValidationError("frame " + std::to_string(frame) + ": expected 70 landmarks, found " +
                          std::to_string(pts.size()));
  }
  LandmarkSet s;
  s.source_frame = frame;
  std::copy(pts.begin(), pts.end(), s.points.begin());
  return s;
}

LandmarkSet LandmarkSet::load(const std::filesystem::path& path, FrameId frame) {
  return from_text(read_file(path), frame);
}

void LandmarkSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_text();
  if (!out) throw IoError("write failed for " + path.string());
}

FrameRejected::FrameRejected(FrameId frame, const std::string& reason)
    : std::runtime_error("frame " + std::to_string(frame) + " rejected: " + reason),
      frame_(frame) {}

ReplayDetector::ReplayDetector(std::filesystem::path dir) : dir_(std::move(dir)) {}

ReplayDetector::ReplayDetector(std::map<FrameId, std::vector<cv::Point2d>> annotations)
    : memory_(std::move(annotations)) {}

std::filesystem::path ReplayDetector::annotation_path(const std::filesystem::path& dir,
                                                      FrameId frame) {
  return dir / (std::to_string(frame) + "_annot68.txt");
}

std::optional<std::vector<cv::Point2d>> ReplayDetector::detect(const cv::Mat&, FrameId frame) {
  if (dir_.empty()) {
    const auto it = memory_.find(frame);
    if (it == memory_.end()) return std::nullopt;
    return it->second;
  }
  const auto path = annotation_path(dir_, frame);
  if (!std::filesystem::exists(path)) return std::nullopt;
  auto pts = parse_points(read_file(path), path.string());
  if (pts.empty()) return std::nullopt;
  return pts;
}

JitterDetector::JitterDetector(std::unique_ptr<LandmarkDetector> inner, int radius,
                               std::uint64_t seed)
    : inner_(std::move(inner)), seed_(seed) {
  if (!inner_) throw ContractError("jitter detector needs an inner detector");
  if (radius < 0) throw ContractError("jitter radius must be >= 0");
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) offsets_.emplace_back(dx, dy);
}

std::optional<std::vector<cv::Point2d>> JitterDetector::detect(const cv::Mat& color,
                                                               FrameId frame) {
  auto pts = inner_->detect(color, frame);
  if (!pts) return pts;
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(frame), static_cast<std::uint32_t>(frame >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick(0, offsets_.size() - 1);
  for (auto& p : *pts) {
    const cv::Point o = offsets_[pick(rng)];
    p.x += o.x;
    p.y += o.y;
  }
  return pts;
}

std::unique_ptr<LandmarkDetector> make_detector(const std::string& backend,
                                                const std::filesystem::path& annotation_dir,
                                                const LandmarkConfig& cfg) {
  if (backend == "replay") return std::make_unique<ReplayDetector>(annotation_dir);
  if (backend == "jitter") {
    return std::make_unique<JitterDetector>(std::make_unique<ReplayDetector>(annotation_dir),
                                            cfg.jitter_px, cfg.jitter_seed);
  }
  throw ConfigError("unknown landmark backend '" + backend + "' (expected replay or jitter)");
}

cv::Rect eye_patch_rect(const std::vector<cv::Point2d>& points, int first, int width,
                        int height) {
  double x0 = points.at(first).x, x1 = x0, y0 = points.at(first).y, y1 = y0;
  for (int i = first; i < first + 6; ++i) {
    x0 = std::min(x0, points.at(i).x);
    x1 = std::max(x1, points.at(i).x);
    y0 = std::min(y0, points.at(i).y);
    y1 = std::max(y1, points.at(i).y);
  }
  const double px = 0.2 * (x1 - x0), py = 0.2 * (y1 - y0);
  int ix0 = static_cast<int>(std::floor(x0 - px)), ix1 = static_cast<int>(std::ceil(x1 + px)) + 1;
  int iy0 = static_cast<int>(std::floor(y0 - py)), iy1 = static_cast<int>(std::ceil(y1 + py)) + 1;
  ix0 = std::clamp(ix0, 0, width);
  ix1 = std::clamp(ix1, 0, width);
  iy0 = std::clamp(iy0, 0, height);
  iy1 = std::clamp(iy1, 0, height);
  return {ix0, iy0, ix1 - ix0, iy1 - iy0};
}

LandmarkSet detect_landmarks(const cv::Mat& color, FrameId frame, LandmarkDetector& detector) {
  if (color.type() != CV_8UC3) throw ContractError("detect_landmarks expects 8-bit BGR");
  const auto pts = detector.detect(color, frame);
  if (!pts) throw FrameRejected(frame, "no face found by backend '" + detector.name() + "'");
  if (pts->size() != kDetectorLandmarks) {
    throw FrameRejected(frame, "backend returned " + std::to_string(pts->size()) +
                                   " points instead of 68");
  }
  LandmarkSet s;
  s.source_frame = frame;
  std::copy(pts->begin(), pts->end(), s.points.begin());
  for (int i = 0; i < kDetectorLandmarks; ++i) {
    const auto& p = s.points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0 || p.y < 0 || p.x >= color.cols ||
        p.y >= color.rows) {
      throw FrameRejected(frame, "landmark " + std::to_string(i) + " lies outside the image");
    }
  }
  cv::Mat gray;
  cv::cvtColor(color, gray, cv::COLOR_BGR2GRAY);
  const std::array<std::pair<int, int>, 2> eyes{{{36, kLeftIris}, {42, kRightIris}}};
  for (const auto& [first, slot] : eyes) {
    const cv::Rect r = eye_patch_rect(*pts, first, color.cols, color.rows);
    if (r.width < 3 || r.height < 3) {
      throw FrameRejected(frame, "eye region at landmark " + std::to_string(first) + " too small");
    }
    const PupilEstimate est = locate_pupil(gray(r));
    s.points[slot] = {r.x + est.center.x, r.y + est.center.y};
  }
  return s;
}

std::string CropRect::to_text() const {
  return std::to_string(x0) + " " + std::to_string(y0) + " " + std::to_string(x1) + " " +
         std::to_string(y1) + "\n";
}

CropRect CropRect::from_text(const std::string& text) {
  std::istringstream in(text);
  CropRect r;
  if (!(in >> r.x0 >> r.y0 >> r.x1 >> r.y1)) throw ValidationError("malformed crop rect");
  return r;
}

CropRect bounding_rect(const LandmarkSet& lms, const CropOptions& options) {
  double minx = lms.points[0].x, maxx = minx, miny = lms.points[0].y, maxy = miny;
  for (const auto& p : lms.points) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }
  if (!(maxx > minx) || !(maxy > miny)) {
    throw ValidationError("frame " + std::to_string(lms.source_frame) +
                          ": landmarks span zero area");
  }
  CropRect r{static_cast<int>(std::floor(minx)) - options.margin,
             static_cast<int>(std::floor(miny)) - options.margin,
             static_cast<int>(std::ceil(maxx)) + options.margin,
             static_cast<int>(std::ceil(maxy)) + options.margin};
  if (options.square) {
    const int d = r.width() - r.height();
    if (d > 0) {
      r.y0 -= d / 2;
      r.y1 += d - d / 2;
    } else if (d < 0) {
      r.x0 -= (-d) / 2;
      r.x1 += (-d) - (-d) / 2;
    }
  }
  return r;
}

CropRect clamp_crop(CropRect rect, int width, int height) {
  auto fit = [](int& lo, int& hi, int limit) {
    if (hi - lo >= limit) {
      lo = 0;
      hi = limit;
      return;
    }
    if (lo < 0) {
      hi -= lo;
      lo = 0;
    }
    if (hi > limit) {
      lo -= hi - limit;
      hi = limit;
    }
  };
  fit(rect.x0, rect.x1, width);
  fit(rect.y0, rect.y1, height);
  return rect;
}

CropRect compute_crop(const LandmarkSet& lms, int width, int height, const CropOptions& options) {
  return clamp_crop(bounding_rect(lms, options), width, height);
}

cv::Point2d to_crop(const cv::Point2d& p, const CropRect& rect, int size) {
  return {(p.x - rect.x0) * size / rect.width(), (p.y - rect.y0) * size / rect.height()};
}

cv::Point2d from_crop(const cv::Point2d& p, const CropRect& rect, int size) {
  return {rect.x0 + p.x * rect.width() / size, rect.y0 + p.y * rect.height() / size};
}

LandmarkSet transform_landmarks(const LandmarkSet& lms, const CropRect& rect, int size) {
  LandmarkSet out = lms;
  for (auto& p : out.points) p = to_crop(p, rect, size);
  return out;
}

RgbdFrame crop_resize(const RgbdFrame& frame, const CropRect& rect, int size) {
  frame.validate();
  if (size <= 0) throw ContractError("crop output size must be positive");
  if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 > frame.color.cols || rect.y1 > frame.color.rows ||
      rect.width() <= 0 || rect.height() <= 0) {
    throw ContractError("crop rect outside the frame");
  }
  const double sx = static_cast<double>(rect.width()) / size;
  const double sy = static_cast<double>(rect.height()) / size;
  RgbdFrame out;
  out.window = frame.window;
  const cv::Matx23d to_source(sx, 0.0, rect.x0, 0.0, sy, rect.y0);
  cv::warpAffine(frame.color, out.color, to_source, cv::Size(size, size),
                 cv::INTER_LINEAR | cv::WARP_INVERSE_MAP, cv::BORDER_REPLICATE);
  out.depth8.create(size, size, CV_8UC1);
  std::vector<int> xs(size);
  for (int u = 0; u < size; ++u) {
    xs[u] = std::clamp(static_cast<int>(std::lround(rect.x0 + u * sx)), 0, frame.depth8.cols - 1);
  }
  for (int v = 0; v < size; ++v) {
    const int y =
        std::clamp(static_cast<int>(std::lround(rect.y0 + v * sy)), 0, frame.depth8.rows - 1);
    const auto* src = frame.depth8.ptr<std::uint8_t>(y);
    auto* dst = out.depth8.ptr<std::uint8_t>(v);
    for (int u = 0; u < size; ++u) dst[u] = src[xs[u]];
  }
  return out;
}

cv::Mat render_flm(const LandmarkSet& lms, int size, int radius) {
  lms.validate(size, size);
  cv::Mat flm = cv::Mat::zeros(size, size, CV_8UC1);
  for (const auto& p : lms.points) {
    const long cx = std::lround(p.x), cy = std::lround(p.y);
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        if (dx * dx + dy * dy > radius * radius) continue;
        const long x = cx + dx, y = cy + dy;
        if (x < 0 || y < 0 || x >= size || y >= size) continue;
        flm.at<std::uint8_t>(static_cast<int>(y), static_cast<int>(x)) = 255;
      }
    }
  }
  return flm;
}

}  // namespace facegan
