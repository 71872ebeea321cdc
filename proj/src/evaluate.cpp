#include "facegan/evaluate.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "facegan/dataset.hpp"
#include "facegan/errors.hpp"

namespace facegan {
namespace {

using nlohmann::ordered_json;

cv::Mat gaussian_kernel() {
  cv::Mat k(kSsimWindow, 1, CV_64F);
  const int r = kSsimWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - r;
    k.at<double>(i) = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += k.at<double>(i);
  }
  return k / sum;
}

SsimResult ssim_luma(const cv::Mat& a, const cv::Mat& b) {
  if (a.rows < kSsimWindow || a.cols < kSsimWindow) {
    throw ContractError("SSIM needs images of at least 11x11");
  }
  static const cv::Mat k = gaussian_kernel();
  auto blur = [&](const cv::Mat& m) {
    cv::Mat out;
    cv::sepFilter2D(m, out, CV_64F, k, k, cv::Point(-1, -1), 0.0, cv::BORDER_REFLECT);
    const int r = kSsimWindow / 2;
    return out(cv::Rect(r, r, m.cols - 2 * r, m.rows - 2 * r)).clone();
  };
  const cv::Mat mu_a = blur(a), mu_b = blur(b);
  const cv::Mat e_aa = blur(a.mul(a)), e_bb = blur(b.mul(b)), e_ab = blur(a.mul(b));
  SsimResult res;
  res.map.create(mu_a.size(), CV_64F);
  double sum = 0.0;
  for (int y = 0; y < mu_a.rows; ++y) {
    for (int x = 0; x < mu_a.cols; ++x) {
      const double ma = mu_a.at<double>(y, x), mb = mu_b.at<double>(y, x);
      const double va = e_aa.at<double>(y, x) - ma * ma;
      const double vb = e_bb.at<double>(y, x) - mb * mb;
      const double cov = e_ab.at<double>(y, x) - ma * mb;
      const double s = ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
                       ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
      res.map.at<double>(y, x) = s;
      sum += s;
    }
  }
  res.mean = sum / static_cast<double>(res.map.total());
  return res;
}

void check_pair(const cv::Mat& a, const cv::Mat& b) {
  if (a.size() != b.size() || a.type() != b.type()) {
    throw ContractError("image pair differs in size or type");
  }
}

cv::Mat blackout(const cv::Mat& image, const cv::Mat& mask) {
  cv::Mat out = cv::Mat::zeros(image.size(), image.type());
  image.copyTo(out, mask);
  return out;
}

nn::Tensor bgr_to_tensor(const cv::Mat& bgr) {
  const int h = bgr.rows, w = bgr.cols;
  nn::Tensor t({1, 3, h, w});
  for (int y = 0; y < h; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      for (int c = 0; c < 3; ++c) t.plane(0, c)[i] = row[x][2 - c] / 127.5 - 1.0;
    }
  }
  return t;
}

ordered_json optional_json(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

double finite_mean(const std::vector<double>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    sum += v;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

cv::Mat to_bgr(const cv::Mat& gray) {
  cv::Mat out;
  cv::cvtColor(gray, out, cv::COLOR_GRAY2BGR);
  return out;
}

}  // namespace

cv::Mat luma(const cv::Mat& image8) {
  cv::Mat out(image8.size(), CV_64F);
  if (image8.type() == CV_8UC1) {
    image8.convertTo(out, CV_64F);
    return out;
  }
  if (image8.type() != CV_8UC3) throw ContractError("luma expects 8-bit gray or BGR");
  for (int y = 0; y < image8.rows; ++y) {
    const auto* src = image8.ptr<cv::Vec3b>(y);
    auto* dst = out.ptr<double>(y);
    for (int x = 0; x < image8.cols; ++x) {
      dst[x] = 0.299 * src[x][2] + 0.587 * src[x][1] + 0.114 * src[x][0];
    }
  }
  return out;
}

SsimResult ssim(const cv::Mat& a, const cv::Mat& b) {
  check_pair(a, b);
  return ssim_luma(luma(a), luma(b));
}

SsimResult ssim_masked(const cv::Mat& a, const cv::Mat& b, const cv::Mat& mask) {
  check_pair(a, b);
  if (mask.size() != a.size() || mask.type() != CV_8UC1) {
    throw ContractError("mask must be 8-bit single channel of the image size");
  }
  SsimResult res = ssim_luma(luma(blackout(a, mask)), luma(blackout(b, mask)));
  const int r = kSsimWindow / 2;
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < res.map.rows; ++y) {
    for (int x = 0; x < res.map.cols; ++x) {
      if (mask.at<std::uint8_t>(y + r, x + r) == 0) continue;
      sum += res.map.at<double>(y, x);
      ++n;
    }
  }
  res.mean = n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  return res;
}

double lpips_distance(const cv::Mat& a, const cv::Mat& b, const LpipsNetwork* net) {
  if (net == nullptr) throw ContractError("LPIPS requested without a perceptual network");
  check_pair(a, b);
  if (a.type() != CV_8UC3) throw ContractError("LPIPS expects 8-bit BGR images");
  return net->distance(bgr_to_tensor(a), bgr_to_tensor(b));
}

double lpips_masked(const cv::Mat& a, const cv::Mat& b, const cv::Mat& mask,
                    const LpipsNetwork* net) {
  return lpips_distance(blackout(a, mask), blackout(b, mask), net);
}

DepthError depth_error_map(const cv::Mat& generated8, const cv::Mat& truth8,
                           const DepthWindow& window, const cv::Mat& mask) {
  window.validate();
  check_pair(generated8, truth8);
  if (generated8.type() != CV_8UC1) throw ContractError("depth maps must be 8-bit codes");
  DepthError out;
  out.error_mm = cv::Mat::zeros(truth8.size(), CV_64F);
  out.support = (generated8 > 0) & (truth8 > 0);
  if (!mask.empty()) out.support &= mask;
  double sum = 0.0;
  std::size_t below = 0;
  for (int y = 0; y < truth8.rows; ++y) {
    for (int x = 0; x < truth8.cols; ++x) {
      if (!out.support.at<std::uint8_t>(y, x)) continue;
      // one code per millimeter
      const double e = std::abs(double(generated8.at<std::uint8_t>(y, x)) -
                                double(truth8.at<std::uint8_t>(y, x)));
      out.error_mm.at<double>(y, x) = e;
      sum += e;
      below += e < 4.0 ? 1 : 0;
      ++out.support_pixels;
    }
  }
  if (out.support_pixels == 0) {
    out.error = "generated and ground-truth depth have no valid pixels in common";
    return out;
  }
  out.mae_mm = sum / static_cast<double>(out.support_pixels);
  out.fraction_below_4mm = static_cast<double>(below) / static_cast<double>(out.support_pixels);
  return out;
}

cv::Mat face_mask(const cv::Mat& depth8, int radius) {
  if (depth8.type() != CV_8UC1) throw ContractError("face_mask expects 8-bit depth codes");
  if (radius < 0) throw ContractError("erosion radius must be >= 0");
  const cv::Mat valid = depth8 > 0;
  if (radius == 0) return valid;
  cv::Mat disc = cv::Mat::zeros(2 * radius + 1, 2 * radius + 1, CV_8UC1);
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) disc.at<std::uint8_t>(dy + radius, dx + radius) = 1;
  cv::Mat out;
  cv::erode(valid, out, disc, cv::Point(-1, -1), 1, cv::BORDER_CONSTANT, cv::Scalar(0));
  return out;
}

std::optional<JpegEquivalent> jpeg_equivalent(const cv::Mat& truth_bgr, double target_ssim) {
  std::vector<std::uint8_t> png;
  cv::imencode(".png", truth_bgr, png);
  for (int q = 1; q <= 100; ++q) {
    std::vector<std::uint8_t> jpg;
    cv::imencode(".jpg", truth_bgr, jpg, {cv::IMWRITE_JPEG_QUALITY, q});
    const cv::Mat decoded = cv::imdecode(jpg, cv::IMREAD_COLOR);
    const double s = ssim(decoded, truth_bgr).mean;
    if (s >= target_ssim) {
      return JpegEquivalent{q, s, static_cast<double>(jpg.size()) / static_cast<double>(png.size())};
    }
  }
  return std::nullopt;
}

std::string EvalRecord::to_json() const {
  ordered_json j;
  j["type"] = "frame";
  j["frame_id"] = id;
  j["ssim"] = ssim;
  j["ssim_masked"] = std::isfinite(ssim_masked) ? ordered_json(ssim_masked) : ordered_json(nullptr);
  j["lpips"] = lpips;
  j["lpips_masked"] = lpips_masked;
  j["depth_mae_mm"] = optional_json(depth_mae_mm);
  j["depth_mae_masked_mm"] = optional_json(depth_mae_masked_mm);
  j["fraction_below_4mm"] = optional_json(fraction_below_4mm);
  if (depth_error) j["depth_error"] = *depth_error;
  if (jpeg) {
    j["jpeg_quality"] = jpeg->quality;
    j["jpeg_ssim"] = jpeg->ssim;
    j["jpeg_size_ratio"] = jpeg->size_ratio;
  }
  j["best_ssim"] = best_ssim;
  j["worst_ssim"] = worst_ssim;
  j["best_lpips"] = best_lpips;
  j["worst_lpips"] = worst_lpips;
  return j.dump();
}

std::string EvalSummary::to_json() const {
  ordered_json j;
  j["type"] = "summary";
  j["frames"] = records.size();
  j["mean_ssim"] = mean_ssim;
  j["mean_ssim_masked"] =
      std::isfinite(mean_ssim_masked) ? ordered_json(mean_ssim_masked) : ordered_json(nullptr);
  j["mean_lpips"] = mean_lpips;
  j["mean_lpips_masked"] = mean_lpips_masked;
  j["mean_depth_mae_mm"] = optional_json(mean_depth_mae_mm);
  j["mean_depth_mae_masked_mm"] = optional_json(mean_depth_mae_masked_mm);
  j["mean_jpeg_quality"] = optional_json(mean_jpeg_quality);
  j["best_ssim_frame"] = best_ssim;
  j["worst_ssim_frame"] = worst_ssim;
  j["best_lpips_frame"] = best_lpips;
  j["worst_lpips_frame"] = worst_lpips;
  return j.dump();
}

EvalSummary evaluate_dataset(const std::vector<EvalSample>& samples, const Synthesizer& synth,
                             const LpipsNetwork* lpips, const EvalOptions& options,
                             EvalOutputs* outputs) {
  if (samples.empty()) throw ValidationError("evaluation set is empty");
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return samples[a].id < samples[b].id; });

  EvalSummary summary;
  std::vector<double> s_all, s_mask, l_all, l_mask, d_all, d_mask, jq;
  for (std::size_t idx : order) {
    const EvalSample& sample = samples[idx];
    const RgbdFrame gen = synth(sample);
    gen.validate();
    if (gen.color.size() != sample.truth.color.size()) {
      throw ValidationError("frame " + std::to_string(sample.id) +
                            ": generated size differs from ground truth");
    }
    const cv::Mat mask = face_mask(sample.truth.depth8, options.erosion_radius);
    EvalRecord rec;
    rec.id = sample.id;
    const SsimResult s = ssim(gen.color, sample.truth.color);
    rec.ssim = s.mean;
    rec.ssim_masked = ssim_masked(gen.color, sample.truth.color, mask).mean;
    rec.lpips = lpips_distance(gen.color, sample.truth.color, lpips);
    rec.lpips_masked = lpips_masked(gen.color, sample.truth.color, mask, lpips);
    const DepthError de = depth_error_map(gen.depth8, sample.truth.depth8, sample.truth.window);
    if (de.error) {
      rec.depth_error = de.error;
    } else {
      rec.depth_mae_mm = de.mae_mm;
      rec.fraction_below_4mm = de.fraction_below_4mm;
      d_all.push_back(de.mae_mm);
    }
    const DepthError dm =
        depth_error_map(gen.depth8, sample.truth.depth8, sample.truth.window, mask);
    if (!dm.error) {
      rec.depth_mae_masked_mm = dm.mae_mm;
      d_mask.push_back(dm.mae_mm);
    }
    if (options.jpeg_equivalence) {
      rec.jpeg = jpeg_equivalent(sample.truth.color, rec.ssim);
      if (rec.jpeg) jq.push_back(rec.jpeg->quality);
    }
    s_all.push_back(rec.ssim);
    s_mask.push_back(rec.ssim_masked);
    l_all.push_back(rec.lpips);
    l_mask.push_back(rec.lpips_masked);
    summary.records.push_back(std::move(rec));
    if (outputs) outputs->generated.push_back(gen);
  }
  summary.mean_ssim = finite_mean(s_all);
  summary.mean_ssim_masked = finite_mean(s_mask);
  summary.mean_lpips = finite_mean(l_all);
  summary.mean_lpips_masked = finite_mean(l_mask);
  if (!d_all.empty()) summary.mean_depth_mae_mm = finite_mean(d_all);
  if (!d_mask.empty()) summary.mean_depth_mae_masked_mm = finite_mean(d_mask);
  if (!jq.empty()) summary.mean_jpeg_quality = finite_mean(jq);

  std::size_t bs = 0, ws = 0, bl = 0, wl = 0;
  auto& r = summary.records;
  for (std::size_t i = 1; i < r.size(); ++i) {
    if (r[i].ssim > r[bs].ssim) bs = i;
    if (r[i].ssim < r[ws].ssim) ws = i;
    if (r[i].lpips < r[bl].lpips) bl = i;
    if (r[i].lpips > r[wl].lpips) wl = i;
  }
  r[bs].best_ssim = r[ws].worst_ssim = r[bl].best_lpips = r[wl].worst_lpips = true;
  summary.best_ssim = r[bs].id;
  summary.worst_ssim = r[ws].id;
  summary.best_lpips = r[bl].id;
  summary.worst_lpips = r[wl].id;
  return summary;
}

const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{"flm",         "generated",    "ground_truth",
                                             "ssim_map",    "depth_error",  "turntable_30",
                                             "turntable_90"};
  return cols;
}

cv::Mat figure_row(const EvalSample& sample, const RgbdFrame& generated,
                   const CameraIntrinsics& camera, const DepthWindow& window) {
  const cv::Size size = sample.truth.color.size();
  std::vector<cv::Mat> panels;
  panels.push_back(to_bgr(sample.flm));
  panels.push_back(generated.color);
  panels.push_back(sample.truth.color);

  const SsimResult s = ssim(generated.color, sample.truth.color);
  cv::Mat ssim_panel = cv::Mat::zeros(size, CV_8UC1);
  const int r = kSsimWindow / 2;
  for (int y = 0; y < s.map.rows; ++y)
    for (int x = 0; x < s.map.cols; ++x)
      ssim_panel.at<std::uint8_t>(y + r, x + r) =
          cv::saturate_cast<std::uint8_t>(255.0 * (1.0 - s.map.at<double>(y, x)));
  panels.push_back(to_bgr(ssim_panel));

  const DepthError de = depth_error_map(generated.depth8, sample.truth.depth8, window);
  cv::Mat err_panel;
  // 8 gray levels per millimeter, saturating at 32 mm
  de.error_mm.convertTo(err_panel, CV_8U, 8.0);
  panels.push_back(to_bgr(err_panel));

  const PointCloud cloud = backproject(generated, camera, window);
  TurntableOptions opt;
  opt.size = size.width;
  opt.splat = 1;
  panels.push_back(render_turntable(cloud, 30.0, opt));
  panels.push_back(render_turntable(cloud, 90.0, opt));
  cv::Mat row;
  cv::hconcat(panels, row);
  return row;
}

void write_report(const std::filesystem::path& dir, const EvalSummary& summary,
                  const std::vector<EvalSample>& samples, const EvalOutputs& outputs,
                  const CameraIntrinsics& camera, const DepthWindow& window) {
  std::filesystem::create_directories(dir / "figures");
  {
    std::ofstream out(dir / "summary.jsonl", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "summary.jsonl").string());
    for (const auto& rec : summary.records) out << rec.to_json() << "\n";
    out << summary.to_json() << "\n";
  }
  ordered_json layout;
  layout["columns"] = report_columns();
  layout["panel_size"] = samples.empty() ? 0 : samples.front().truth.color.cols;
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < summary.records.size(); ++i) {
    const FrameId id = summary.records[i].id;
    const auto it = std::find_if(samples.begin(), samples.end(),
                                 [&](const EvalSample& s) { return s.id == id; });
    if (it == samples.end() || i >= outputs.generated.size()) continue;
    const std::string name = "figures/" + std::to_string(id) + ".png";
    write_image(dir / name, figure_row(*it, outputs.generated[i], camera, window));
    rows.push_back({{"frame_id", id}, {"file", name}});
  }
  layout["rows"] = rows;
  std::ofstream out(dir / "layout.json", std::ios::trunc);
  out << layout.dump(2) << "\n";
}

}  // namespace facegan
