#include "facegan/pointcloud.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <spdlog/spdlog.h>

#include "facegan/errors.hpp"

namespace facegan {

static_assert(std::endian::native == std::endian::little, "PLY writer assumes little-endian");

PointCloud backproject(const RgbdFrame& frame, const CameraIntrinsics& intr,
                       const DepthWindow& window) {
  frame.validate();
  intr.validate();
  if (intr.width != frame.depth8.cols || intr.height != frame.depth8.rows) {
    throw ContractError("intrinsics are " + std::to_string(intr.width) + "x" +
                        std::to_string(intr.height) + " but the frame is " +
                        std::to_string(frame.depth8.cols) + "x" +
                        std::to_string(frame.depth8.rows));
  }
  PointCloud cloud;
  for (int v = 0; v < frame.depth8.rows; ++v) {
    const auto* d = frame.depth8.ptr<std::uint8_t>(v);
    const auto* c = frame.color.ptr<cv::Vec3b>(v);
    for (int u = 0; u < frame.depth8.cols; ++u) {
      if (d[u] == 0) continue;
      const double z = window.near_mm + d[u];
      cloud.points.emplace_back((u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z);
      cloud.colors.emplace_back(c[u][2], c[u][1], c[u][0]);
    }
  }
  return cloud;
}

cv::Point2d project(const cv::Point3d& p, const CameraIntrinsics& intr) {
  return {intr.fx * p.x / p.z + intr.cx, intr.fy * p.y / p.z + intr.cy};
}

void export_ply(const PointCloud& cloud, const std::filesystem::path& path) {
  if (cloud.points.size() != cloud.colors.size()) {
    throw ContractError("point and color counts differ");
  }
  if (cloud.empty()) spdlog::warn("writing empty point cloud to {}", path.string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ply\n"
      << "format binary_little_endian 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  std::string body;
  body.reserve(cloud.size() * 15);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const float xyz[3] = {static_cast<float>(cloud.points[i].x),
                          static_cast<float>(cloud.points[i].y),
                          static_cast<float>(cloud.points[i].z)};
    body.append(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    body.append(reinterpret_cast<const char*>(cloud.colors[i].val), 3);
  }
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t count = 0;
  bool binary = false;
  std::vector<std::string> props;
  if (!std::getline(in, line) || line != "ply") throw IoError(path.string() + ": not a PLY file");
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      binary = fmt == "binary_little_endian";
    } else if (word == "element") {
      std::string name;
      ls >> name >> count;
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(type + " " + name);
    }
  }
  const std::vector<std::string> expected{"float x",     "float y",     "float z",
                                          "uchar red",   "uchar green", "uchar blue"};
  if (!binary || props != expected) throw IoError(path.string() + ": unsupported PLY layout");
  PointCloud cloud;
  cloud.points.reserve(count);
  cloud.colors.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    float xyz[3];
    cv::Vec3b rgb;
    if (!in.read(reinterpret_cast<char*>(xyz), sizeof(xyz)) ||
        !in.read(reinterpret_cast<char*>(rgb.val), 3)) {
      throw IoError(path.string() + ": truncated PLY body");
    }
    cloud.points.emplace_back(xyz[0], xyz[1], xyz[2]);
    cloud.colors.push_back(rgb);
  }
  return cloud;
}

namespace {

cv::Point3d centroid(const PointCloud& cloud) {
  cv::Point3d c(0, 0, 0);
  for (const auto& p : cloud.points) c += p;
  return c * (1.0 / static_cast<double>(cloud.size()));
}

}  // namespace

double turntable_fit_scale(const PointCloud& cloud, int size) {
  if (cloud.empty()) return 1.0;
  const cv::Point3d c = centroid(cloud);
  double radius = 0.0;
  for (const auto& p : cloud.points) {
    radius = std::max(radius, std::hypot(p.x - c.x, p.z - c.z));
    radius = std::max(radius, std::abs(p.y - c.y));
  }
  return radius > 0.0 ? 0.45 * size / radius : 1.0;
}

cv::Mat render_turntable(const PointCloud& cloud, double angle_deg,
                         const TurntableOptions& options) {
  if (options.size <= 0) throw ContractError("turntable size must be positive");
  cv::Mat image(options.size, options.size, CV_8UC3, cv::Scalar(options.background[0],
                                                                options.background[1],
                                                                options.background[2]));
  if (cloud.empty()) return image;
  const double scale =
      options.scale > 0.0 ? options.scale : turntable_fit_scale(cloud, options.size);
  const cv::Point3d c = centroid(cloud);
  const double t = angle_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(t), st = std::sin(t);
  const double half = options.size / 2.0;
  cv::Mat zbuf(options.size, options.size, CV_64F, cv::Scalar(std::numeric_limits<double>::infinity()));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const cv::Point3d d = cloud.points[i] - c;
    const double xr = d.x * ct + d.z * st;
    const double zr = -d.x * st + d.z * ct;
    const long u0 = std::lround(xr * scale + half);
    const long v0 = std::lround(d.y * scale + half);
    const cv::Vec3b& rgb = cloud.colors[i];
    for (long v = v0 - options.splat; v <= v0 + options.splat; ++v) {
      for (long u = u0 - options.splat; u <= u0 + options.splat; ++u) {
        if (u < 0 || v < 0 || u >= options.size || v >= options.size) continue;
        double& z = zbuf.at<double>(static_cast<int>(v), static_cast<int>(u));
        if (zr < z) {
          z = zr;
          image.at<cv::Vec3b>(static_cast<int>(v), static_cast<int>(u)) = {rgb[2], rgb[1], rgb[0]};
        }
      }
    }
  }
  return image;
}

}  // namespace facegan
