#include "facegan/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "facegan/errors.hpp"

namespace facegan {
namespace {

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ValidationError("meta: '" + key + "' is not a number: " + value);
  }
  return v;
}

void put_intrinsics(std::ostringstream& out, const std::string& prefix,
                    const CameraIntrinsics& c) {
  out << prefix << ".fx=" << fmt_double(c.fx) << "\n"
      << prefix << ".fy=" << fmt_double(c.fy) << "\n"
      << prefix << ".cx=" << fmt_double(c.cx) << "\n"
      << prefix << ".cy=" << fmt_double(c.cy) << "\n"
      << prefix << ".width=" << c.width << "\n"
      << prefix << ".height=" << c.height << "\n";
}

CameraIntrinsics take_intrinsics(std::map<std::string, std::string>& kv, const std::string& p) {
  auto take = [&](const std::string& k) {
    const auto it = kv.find(p + "." + k);
    if (it == kv.end()) throw ValidationError("meta: missing '" + p + "." + k + "'");
    std::string v = it->second;
    kv.erase(it);
    return parse_double(p + "." + k, v);
  };
  CameraIntrinsics c;
  c.fx = take("fx");
  c.fy = take("fy");
  c.cx = take("cx");
  c.cy = take("cy");
  c.width = static_cast<int>(take("width"));
  c.height = static_cast<int>(take("height"));
  return c;
}

}  // namespace

fs::path DatasetLayout::file(const fs::path& dir, FrameId id, const std::string& suffix) {
  return dir / (std::to_string(id) + suffix);
}

std::string DatasetMeta::serialize() const {
  std::ostringstream out;
  out << "window.near_mm=" << window.near_mm << "\n";
  out << "window.span_mm=" << window.span_mm << "\n";
  if (calibration) {
    put_intrinsics(out, "calib.depth", calibration->depth);
    put_intrinsics(out, "calib.color", calibration->color);
    out << "calib.rotation=";
    for (int i = 0; i < 9; ++i) out << (i ? " " : "") << fmt_double(calibration->rotation.val[i]);
    out << "\ncalib.translation_mm=";
    for (int i = 0; i < 3; ++i) out << (i ? " " : "") << fmt_double(calibration->translation_mm[i]);
    out << "\n";
  }
  if (test_split) {
    out << "split.test=";
    for (std::size_t i = 0; i < test_split->size(); ++i) out << (i ? "," : "") << (*test_split)[i];
    out << "\n";
  }
  return out.str();
}

DatasetMeta DatasetMeta::parse(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("meta: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  DatasetMeta m;
  auto take = [&](const std::string& k) -> std::optional<std::string> {
    const auto it = kv.find(k);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  if (auto v = take("window.near_mm")) m.window.near_mm = static_cast<int>(parse_double("window.near_mm", *v));
  if (auto v = take("window.span_mm")) m.window.span_mm = static_cast<int>(parse_double("window.span_mm", *v));
  if (kv.count("calib.depth.fx")) {
    StereoCalibration c;
    c.depth = take_intrinsics(kv, "calib.depth");
    c.color = take_intrinsics(kv, "calib.color");
    if (auto v = take("calib.rotation")) {
      std::istringstream rs(*v);
      for (int i = 0; i < 9; ++i)
        if (!(rs >> c.rotation.val[i])) throw ValidationError("meta: calib.rotation needs 9 values");
    }
    if (auto v = take("calib.translation_mm")) {
      std::istringstream ts(*v);
      for (int i = 0; i < 3; ++i)
        if (!(ts >> c.translation_mm[i]))
          throw ValidationError("meta: calib.translation_mm needs 3 values");
    }
    m.calibration = c;
  }
  if (auto v = take("split.test")) {
    std::vector<FrameId> ids;
    std::istringstream ss(*v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      ids.push_back(static_cast<FrameId>(std::stoll(tok)));
    }
    m.test_split = ids;
  }
  if (!kv.empty()) throw ValidationError("meta: unknown key '" + kv.begin()->first + "'");
  m.window.validate();
  return m;
}

DatasetMeta DatasetMeta::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset meta " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void DatasetMeta::save(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize();
}

std::vector<FrameId> list_frames(const fs::path& dir, const std::string& suffix) {
  std::vector<FrameId> ids;
  if (!fs::is_directory(dir)) return ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    const std::string stem = name.substr(0, name.size() - suffix.size());
    FrameId id = 0;
    const auto res = std::from_chars(stem.data(), stem.data() + stem.size(), id);
    if (res.ec == std::errc() && res.ptr == stem.data() + stem.size()) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

cv::Mat read_image(const fs::path& path, int expected_type) {
  if (!fs::exists(path)) throw IoError("missing image " + path.string());
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw IoError("cannot decode image " + path.string());
  if (img.type() != expected_type) {
    throw ValidationError(path.string() + ": unexpected pixel format");
  }
  return img;
}

void write_image(const fs::path& path, const cv::Mat& image) {
  if (!cv::imwrite(path.string(), image)) throw IoError("cannot write image " + path.string());
}

nn::Tensor flm_to_tensor(const cv::Mat& flm) {
  if (flm.type() != CV_8UC1) throw ContractError("FLM must be 8-bit single channel");
  nn::Tensor t({1, 1, flm.rows, flm.cols});
  double* dst = t.data();
  for (int y = 0; y < flm.rows; ++y) {
    const auto* row = flm.ptr<std::uint8_t>(y);
    for (int x = 0; x < flm.cols; ++x) *dst++ = row[x] / 127.5 - 1.0;
  }
  return t;
}

nn::Tensor rgbd_to_tensor(const RgbdFrame& frame) {
  frame.validate();
  const int h = frame.color.rows, w = frame.color.cols;
  nn::Tensor t({1, 4, h, w});
  double* r = t.plane(0, 0);
  double* g = t.plane(0, 1);
  double* b = t.plane(0, 2);
  double* d = t.plane(0, 3);
  for (int y = 0; y < h; ++y) {
    const auto* c = frame.color.ptr<cv::Vec3b>(y);
    const auto* z = frame.depth8.ptr<std::uint8_t>(y);
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      b[i] = c[x][0] / 127.5 - 1.0;
      g[i] = c[x][1] / 127.5 - 1.0;
      r[i] = c[x][2] / 127.5 - 1.0;
      d[i] = z[x] / 127.5 - 1.0;
    }
  }
  return t;
}

RgbdFrame tensor_to_rgbd(const nn::Tensor& rgbd, const DepthWindow& window) {
  if (rgbd.n() != 1 || rgbd.c() != 4) throw ContractError("expected a [1, 4, H, W] tensor");
  const int h = rgbd.h(), w = rgbd.w();
  auto to8 = [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::round((v + 1.0) * 127.5), 0.0, 255.0));
  };
  RgbdFrame f;
  f.window = window;
  f.color.create(h, w, CV_8UC3);
  f.depth8.create(h, w, CV_8UC1);
  const double* r = rgbd.plane(0, 0);
  const double* g = rgbd.plane(0, 1);
  const double* b = rgbd.plane(0, 2);
  const double* d = rgbd.plane(0, 3);
  for (int y = 0; y < h; ++y) {
    auto* c = f.color.ptr<cv::Vec3b>(y);
    auto* z = f.depth8.ptr<std::uint8_t>(y);
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      c[x] = {to8(b[i]), to8(g[i]), to8(r[i])};
      z[x] = to8(d[i]);
    }
  }
  return f;
}

TrainingSample load_sample(const DatasetLayout& layout, FrameId id) {
  const fs::path dir = layout.flm();
  RgbdFrame frame;
  frame.color = read_image(DatasetLayout::file(dir, id, "_color.png"), CV_8UC3);
  frame.depth8 = read_image(DatasetLayout::file(dir, id, "_depth8.png"), CV_8UC1);
  const cv::Mat flm = read_image(DatasetLayout::file(dir, id, "_flm.png"), CV_8UC1);
  if (flm.size() != frame.color.size()) {
    throw ValidationError("frame " + std::to_string(id) + ": FLM and RGBD sizes differ");
  }
  TrainingSample s;
  s.id = id;
  s.flm = flm_to_tensor(flm);
  s.rgbd = rgbd_to_tensor(frame);
  return s;
}

std::vector<TrainingSample> load_samples(const DatasetLayout& layout,
                                         const std::vector<FrameId>& ids) {
  std::vector<TrainingSample> out;
  out.reserve(ids.size());
  for (FrameId id : ids) out.push_back(load_sample(layout, id));
  return out;
}

std::vector<FrameId> read_rejected(const fs::path& flm_dir) {
  std::vector<FrameId> ids;
  std::ifstream in(flm_dir / "rejected.txt");
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    FrameId id = 0;
    if (ls >> id) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string PreflightReport::summary() const {
  std::ostringstream out;
  out << (ok() ? "preflight passed" : "preflight failed") << ": " << frames.size()
      << " complete frames";
  if (!rejected.empty()) out << ", " << rejected.size() << " rejected by landmark detection";
  out << "\n";
  for (const auto& p : problems) out << "  " << p << "\n";
  return out.str();
}

PreflightReport preflight(const fs::path& root, int expected_size) {
  PreflightReport report;
  const DatasetLayout layout{root};
  std::optional<DatasetMeta> meta;
  if (!fs::exists(layout.meta())) {
    report.problems.push_back("missing " + layout.meta().string());
  } else {
    try {
      meta = DatasetMeta::load(layout.meta());
    } catch (const std::exception& e) {
      report.problems.push_back(e.what());
    }
  }
  const fs::path dir = layout.flm();
  if (!fs::is_directory(dir)) {
    report.problems.push_back("missing directory " + dir.string());
    return report;
  }
  report.rejected = read_rejected(dir);
  const std::vector<std::pair<std::string, int>> parts{
      {"_color.png", cv::IMREAD_COLOR}, {"_depth8.png", cv::IMREAD_UNCHANGED},
      {"_flm.png", cv::IMREAD_UNCHANGED}};
  std::vector<FrameId> all;
  for (const auto& [suffix, mode] : parts) {
    for (FrameId id : list_frames(dir, suffix)) all.push_back(id);
  }
  for (FrameId id : list_frames(layout.processed(), "_color.png")) {
    if (!std::binary_search(report.rejected.begin(), report.rejected.end(), id)) all.push_back(id);
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::map<std::pair<int, int>, std::vector<FrameId>> by_size;
  for (FrameId id : all) {
    bool complete = true;
    std::optional<cv::Size> size;
    bool mixed = false;
    for (const auto& [suffix, mode] : parts) {
      const fs::path f = DatasetLayout::file(dir, id, suffix);
      if (!fs::exists(f)) {
        report.problems.push_back("frame " + std::to_string(id) + ": missing " + f.string());
        complete = false;
        continue;
      }
      const cv::Mat img = cv::imread(f.string(), cv::IMREAD_UNCHANGED);
      if (img.empty()) {
        report.problems.push_back("frame " + std::to_string(id) + ": unreadable " + f.string());
        complete = false;
        continue;
      }
      if (size && *size != img.size()) mixed = true;
      size = img.size();
    }
    if (!complete) continue;
    if (mixed) {
      report.problems.push_back("frame " + std::to_string(id) +
                                ": color, depth and FLM resolutions differ");
      continue;
    }
    report.frames.push_back(id);
    by_size[{size->width, size->height}].push_back(id);
  }
  if (by_size.size() > 1) {
    std::ostringstream msg;
    msg << "mixed resolutions:";
    for (const auto& [wh, ids] : by_size) {
      msg << " " << wh.first << "x" << wh.second << " (frames";
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg << " " << ids[i];
      if (ids.size() > 20) msg << " ...";
      msg << ")";
    }
    report.problems.push_back(msg.str());
  }
  for (const auto& [wh, ids] : by_size) {
    if (wh.first != wh.second) {
      report.problems.push_back("non-square frames " + std::to_string(wh.first) + "x" +
                                std::to_string(wh.second));
    } else if (expected_size > 0 && wh.first != expected_size) {
      std::ostringstream msg;
      msg << "frames at " << wh.first << "x" << wh.second << " but the generator expects "
          << expected_size << "x" << expected_size << " (frames";
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg << " " << ids[i];
      msg << ")";
      report.problems.push_back(msg.str());
    }
  }
  if (report.frames.size() < 2) report.problems.push_back("need at least 2 complete frames");
  if (meta && meta->test_split) {
    for (FrameId id : *meta->test_split) {
      if (!std::binary_search(report.frames.begin(), report.frames.end(), id)) {
        report.problems.push_back("split.test lists frame " + std::to_string(id) +
                                  " which is not a complete frame");
      }
    }
    if (meta->test_split->size() >= report.frames.size()) {
      report.problems.push_back("split.test leaves no training frames");
    }
  }
  return report;
}

}  // namespace facegan
