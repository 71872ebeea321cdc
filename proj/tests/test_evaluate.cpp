#include <fstream>
#include <random>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "doctest.h"
#include "facegan/errors.hpp"
#include "facegan/evaluate.hpp"
#include "ssim_oracle.hpp"
#include "toy_dataset.hpp"

using namespace facegan;

namespace {

cv::Mat brute_face_mask(const cv::Mat& depth8, int radius) {
  cv::Mat out = cv::Mat::zeros(depth8.size(), CV_8UC1);
  for (int y = 0; y < depth8.rows; ++y) {
    for (int x = 0; x < depth8.cols; ++x) {
      bool keep = true;
      for (int dy = -radius; dy <= radius && keep; ++dy) {
        for (int dx = -radius; dx <= radius && keep; ++dx) {
          if (dx * dx + dy * dy > radius * radius) continue;
          const int yy = y + dy, xx = x + dx;
          keep = yy >= 0 && xx >= 0 && yy < depth8.rows && xx < depth8.cols &&
                 depth8.at<std::uint8_t>(yy, xx) > 0;
        }
      }
      out.at<std::uint8_t>(y, x) = keep ? 255 : 0;
    }
  }
  return out;
}

EvalSample face_sample(FrameId id, int size) {
  EvalSample s;
  s.id = id;
  s.flm = cv::Mat::zeros(size, size, CV_8UC1);
  s.truth.color = cv::Mat(size, size, CV_8UC3, cv::Scalar(40, 90, 160));
  s.truth.depth8 = cv::Mat::zeros(size, size, CV_8UC1);
  cv::circle(s.truth.depth8, {size / 2, size / 2}, size / 3, cv::Scalar(120), cv::FILLED);
  cv::circle(s.truth.color, {size / 2, size / 2}, size / 6, cv::Scalar(200, 30, 30), cv::FILLED);
  cv::circle(s.flm, {size / 2, size / 2}, 2, cv::Scalar(255), cv::FILLED);
  return s;
}

}  // namespace

TEST_CASE("SSIM of identical images is one") {
  const auto [a, b] = testing::random_pair(32, 3);
  const SsimResult r = ssim(a, a);
  CHECK(r.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.map.size() == cv::Size(22, 22));
  CHECK(r.map.type() == CV_64F);
}

TEST_CASE("SSIM of opposite constants has a closed form") {
  const cv::Mat white(20, 20, CV_8UC3, cv::Scalar::all(255));
  const cv::Mat black(20, 20, CV_8UC3, cv::Scalar::all(0));
  CHECK(std::abs(ssim(white, black).mean - kSsimC1 / (255.0 * 255.0 + kSsimC1)) < 1e-10);
}

TEST_CASE("SSIM matches a direct-sum oracle") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto [a, b] = testing::random_pair(24 + 4 * static_cast<int>(seed), seed);
    const double got = ssim(a, b).mean;
    CHECK(std::abs(got - testing::oracle_ssim(a, b)) < 1e-8);
    CHECK(got == doctest::Approx(ssim(b, a).mean).epsilon(1e-12));
    CHECK(got <= 1.0);
    CHECK(got >= -1.0);
  }
  cv::Mat ga, gb;
  const auto [a, b] = testing::random_pair(30, 9);
  cv::extractChannel(a, ga, 1);
  cv::extractChannel(b, gb, 1);
  CHECK(std::abs(ssim(ga, gb).mean - testing::oracle_ssim(ga, gb)) < 1e-8);
  CHECK_THROWS_AS(ssim(a, gb), ContractError);
  CHECK_THROWS_AS(ssim(a(cv::Rect(0, 0, 10, 10)), b(cv::Rect(0, 0, 10, 10))), ContractError);
}

TEST_CASE("masked SSIM ignores pixels outside the mask") {
  auto [a, b] = testing::random_pair(40, 4);
  cv::Mat mask = cv::Mat::zeros(40, 40, CV_8UC1);
  mask(cv::Rect(8, 8, 24, 24)).setTo(255);
  const double before = ssim_masked(a, b, mask).mean;
  cv::Mat a2 = a.clone(), b2 = b.clone();
  a2(cv::Rect(0, 0, 40, 5)).setTo(cv::Scalar(1, 2, 3));
  b2(cv::Rect(35, 0, 5, 40)).setTo(cv::Scalar(200, 200, 0));
  CHECK(ssim_masked(a2, b2, mask).mean == before);
  CHECK(ssim_masked(a, a, mask).mean == doctest::Approx(1.0));
  CHECK(std::isnan(ssim_masked(a, b, cv::Mat::zeros(40, 40, CV_8UC1)).mean));
  const cv::Mat full(40, 40, CV_8UC1, cv::Scalar(255));
  CHECK(ssim_masked(a, b, full).mean == doctest::Approx(ssim(a, b).mean).epsilon(1e-12));
}

TEST_CASE("LPIPS distance is zero on identity and symmetric") {
  const auto net = LpipsNetwork::random_features(1);
  const auto [a, b] = testing::random_pair(32, 5);
  CHECK(lpips_distance(a, a, &net) == doctest::Approx(0.0));
  const double ab = lpips_distance(a, b, &net);
  CHECK(ab > 0.0);
  CHECK(ab == doctest::Approx(lpips_distance(b, a, &net)).epsilon(1e-12));
  CHECK_THROWS_AS(lpips_distance(a, b, nullptr), ContractError);
  cv::Mat mask = cv::Mat::zeros(32, 32, CV_8UC1);
  mask(cv::Rect(4, 4, 20, 20)).setTo(255);
  CHECK(lpips_masked(a, a, mask, &net) == doctest::Approx(0.0));
}

TEST_CASE("depth error map") {
  cv::Mat truth = cv::Mat::zeros(10, 10, CV_8UC1);
  truth(cv::Rect(2, 2, 6, 6)).setTo(100);
  const DepthWindow w;

  const cv::Mat plus3 = truth + 3;
  DepthError e = depth_error_map(plus3, truth, w);
  CHECK(e.support_pixels == 36);
  CHECK(e.mae_mm == 3.0);
  CHECK(e.fraction_below_4mm == 1.0);
  CHECK(e.error_mm.at<double>(0, 0) == 0.0);
  CHECK(e.error_mm.at<double>(4, 4) == 3.0);

  cv::Mat mixed = truth.clone();
  mixed(cv::Rect(2, 2, 6, 3)) += 4;
  e = depth_error_map(mixed, truth, w);
  CHECK(e.mae_mm == 2.0);
  CHECK(e.fraction_below_4mm == 0.5);

  cv::Mat holes = plus3.clone();
  holes(cv::Rect(2, 2, 6, 1)).setTo(0);
  e = depth_error_map(holes, truth, w);
  CHECK(e.support_pixels == 30);

  cv::Mat mask = cv::Mat::zeros(10, 10, CV_8UC1);
  mask.at<std::uint8_t>(4, 4) = 255;
  CHECK(depth_error_map(plus3, truth, w, mask).support_pixels == 1);

  e = depth_error_map(cv::Mat::zeros(10, 10, CV_8UC1), truth, w);
  CHECK(e.error.has_value());
  CHECK(e.support_pixels == 0);
}

TEST_CASE("face mask erosion") {
  cv::Mat d = cv::Mat::zeros(12, 12, CV_8UC1);
  d(cv::Rect(2, 2, 8, 8)).setTo(50);
  CHECK(cv::countNonZero(face_mask(d, 0)) == 64);
  CHECK(cv::countNonZero(face_mask(d, 1)) == 36);
  CHECK(cv::countNonZero(face_mask(d, 3)) == 4);
  CHECK(cv::countNonZero(face_mask(d, 4)) == 0);

  const cv::Mat edge(6, 6, CV_8UC1, cv::Scalar(9));
  CHECK(cv::countNonZero(face_mask(edge, 1)) == 16);

  std::mt19937 rng(2);
  std::bernoulli_distribution on(0.85);
  cv::Mat noisy(30, 30, CV_8UC1);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 30; ++x) noisy.at<std::uint8_t>(y, x) = on(rng) ? 80 : 0;
  int prev = cv::countNonZero(noisy);
  for (int r = 0; r <= 4; ++r) {
    const cv::Mat m = face_mask(noisy, r);
    CHECK(cv::norm(m, brute_face_mask(noisy, r), cv::NORM_INF) == 0);
    const int n = cv::countNonZero(m);
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("oracle synthesizer scores perfectly") {
  const auto net = LpipsNetwork::random_features(1);
  const std::vector<EvalSample> samples{face_sample(5, 48), face_sample(2, 48)};
  EvalOutputs outputs;
  const EvalSummary s = evaluate_dataset(
      samples, [](const EvalSample& x) { return x.truth; }, &net, {}, &outputs);
  REQUIRE(s.records.size() == 2);
  CHECK(s.records[0].id == 2);
  CHECK(s.mean_ssim == doctest::Approx(1.0));
  CHECK(s.mean_ssim_masked == doctest::Approx(1.0));
  CHECK(s.mean_lpips == doctest::Approx(0.0));
  REQUIRE(s.mean_depth_mae_mm);
  CHECK(*s.mean_depth_mae_mm == 0.0);
  CHECK(outputs.generated.size() == 2);
  const std::string json = s.to_json();
  CHECK(json.find("seconds") == std::string::npos);
  CHECK(json.find("\"type\":\"summary\"") != std::string::npos);
}

TEST_CASE("best and worst frames") {
  const auto net = LpipsNetwork::random_features(1);
  const std::vector<EvalSample> samples{face_sample(1, 48), face_sample(2, 48)};
  const Synthesizer synth = [](const EvalSample& x) {
    RgbdFrame f{x.truth.color.clone(), x.truth.depth8.clone(), x.truth.window};
    if (x.id == 2) {
      cv::Mat noise(f.color.size(), CV_8UC3);
      cv::randu(noise, 0, 80);
      f.color += noise;
      f.depth8.setTo(130, f.depth8 > 0);
    }
    return f;
  };
  const EvalSummary s = evaluate_dataset(samples, synth, &net, {});
  CHECK(s.best_ssim == 1);
  CHECK(s.worst_ssim == 2);
  CHECK(s.best_lpips == 1);
  CHECK(s.worst_lpips == 2);
  CHECK(s.records[0].best_ssim);
  CHECK(s.records[1].worst_ssim);
  CHECK(*s.records[1].depth_mae_mm == 10.0);

  const std::vector<EvalSample> twins{face_sample(7, 48), face_sample(3, 48)};
  const EvalSummary tie = evaluate_dataset(
      twins, [](const EvalSample& x) { return x.truth; }, &net, {});
  CHECK(tie.best_ssim == 3);
  CHECK(tie.worst_ssim == 3);
}

TEST_CASE("JPEG equivalence picks the smallest sufficient quality") {
  const auto [a, b] = testing::random_pair(32, 6);
  const auto j = jpeg_equivalent(a, 0.8);
  REQUIRE(j);
  CHECK(j->ssim >= 0.8);
  CHECK(j->size_ratio > 0.0);
  if (j->quality > 1) {
    std::vector<std::uint8_t> buf;
    cv::imencode(".jpg", a, buf, {cv::IMWRITE_JPEG_QUALITY, j->quality - 1});
    CHECK(ssim(cv::imdecode(buf, cv::IMREAD_COLOR), a).mean < 0.8);
  }
  CHECK_FALSE(jpeg_equivalent(a, 1.5));
}

TEST_CASE("report layout") {
  CHECK(report_columns() == std::vector<std::string>{"flm", "generated", "ground_truth",
                                                     "ssim_map", "depth_error", "turntable_30",
                                                     "turntable_90"});
  testing::TempDir dir("report");
  const auto net = LpipsNetwork::random_features(1);
  const std::vector<EvalSample> samples{face_sample(4, 40)};
  EvalOutputs outputs;
  const EvalSummary s = evaluate_dataset(
      samples, [](const EvalSample& x) { return x.truth; }, &net, {}, &outputs);
  const CameraIntrinsics cam = CameraIntrinsics::synthetic(40, 40);
  write_report(dir.path(), s, samples, outputs, cam, DepthWindow{});

  const cv::Mat fig = cv::imread((dir / "figures/4.png").string());
  CHECK(fig.size() == cv::Size(40 * 7, 40));
  // identical images: SSIM panel black, depth-error panel black
  CHECK(cv::countNonZero(fig(cv::Rect(40 * 3 + 5, 5, 30, 30)).reshape(1)) == 0);
  CHECK(cv::countNonZero(fig(cv::Rect(40 * 4, 0, 40, 40)).reshape(1)) == 0);

  std::ifstream in(dir / "layout.json");
  const auto layout = nlohmann::json::parse(in);
  CHECK(layout["columns"].size() == 7);
  CHECK(layout["rows"][0]["file"] == "figures/4.png");

  std::ifstream sum(dir / "summary.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(sum, line)) ++lines;
  CHECK(lines == 2);
}
