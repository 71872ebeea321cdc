#include <fstream>
#include <numeric>
#include <thread>

#include "doctest.h"
#include "facegan/errors.hpp"
#include "facegan/infer.hpp"
#include "facegan/landmarks.hpp"
#include "facegan/optimizer.hpp"
#include "facegan/training.hpp"
#include "toy_dataset.hpp"

using namespace facegan;

namespace {

PipelineConfig tiny() {
  PipelineConfig cfg = testing::toy_config(32, 2);
  cfg.generator.base_width = 4;
  cfg.discriminator.base_width = 4;
  return cfg;
}

cv::Mat sample_flm(int size) {
  LandmarkSet lms;
  for (int i = 0; i < kLandmarkCount; ++i) {
    lms.points[i] = {4.0 + (i * 7) % (size - 8), 4.0 + (i * 11) % (size - 8)};
  }
  return render_flm(lms, size, 1);
}

}  // namespace

TEST_CASE("latency ring") {
  LatencyRing ring(1000);
  CHECK(ring.mean() == 0.0);
  for (int i = 1; i <= 10; ++i) ring.record(i);
  CHECK(ring.mean() == 5.5);
  for (int i = 11; i <= 1500; ++i) ring.record(i);
  CHECK(ring.size() == 1000);
  const auto snap = ring.snapshot();
  CHECK(snap.front() == 501);
  CHECK(snap.back() == 1500);
  CHECK(ring.mean() == std::accumulate(snap.begin(), snap.end(), 0.0) / 1000.0);
  CHECK(ring.mean() == 1000.5);
}

TEST_CASE("session loads a training checkpoint") {
  testing::TempDir dir("infer");
  const PipelineConfig cfg = tiny();
  const auto lpips = make_lpips(cfg.lpips);
  Trainer trainer(cfg, lpips.get());
  trainer.save(dir / "t.ckpt", {{1, 2}, {3}});

  const auto session = InferenceSession::load(dir / "t.ckpt");
  const SessionManifest& m = session->manifest();
  CHECK(m.sections == std::vector<std::string>{"config", "generator"});
  CHECK_FALSE(m.discriminator_loaded);
  CHECK_FALSE(m.lpips_loaded);
  std::size_t count = 0;
  for (const auto* p : std::as_const(trainer).gan().generator().parameters()) count += p->value.size();
  CHECK(m.generator_parameters == count);
  CHECK(session->config().serialize() == cfg.serialize());

  SUBCASE("bit-exact with the training generator and deterministic") {
    const cv::Mat flm = sample_flm(32);
    const nn::Tensor x = flm_to_tensor(flm);
    const nn::Tensor expect = trainer.gan().generator().forward(x, nullptr, nullptr);
    const nn::Tensor got = session->generate(x);
    REQUIRE(got.shape() == expect.shape());
    for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == expect[i]);

    const RgbdFrame a = session->synthesize(flm);
    const RgbdFrame b = session->synthesize(flm);
    CHECK(cv::norm(a.color, b.color, cv::NORM_INF) == 0);
    CHECK(cv::norm(a.depth8, b.depth8, cv::NORM_INF) == 0);
    CHECK(cv::norm(a.color, tensor_to_rgbd(expect, cfg.window).color, cv::NORM_INF) == 0);

    const auto copy = InferenceSession::from_generator(cfg, trainer.gan().generator());
    const nn::Tensor again = copy->generate(x);
    for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(again[i] == got[i]);
  }
  SUBCASE("input contract") {
    const RgbdFrame blank = session->synthesize(cv::Mat::zeros(32, 32, CV_8UC1));
    CHECK(blank.color.size() == cv::Size(32, 32));
    CHECK(blank.depth8.type() == CV_8UC1);
    CHECK_THROWS_AS(session->synthesize(cv::Mat::zeros(64, 64, CV_8UC1)), ContractError);
    CHECK_THROWS_AS(session->synthesize(cv::Mat::zeros(32, 32, CV_8UC3)), ContractError);
    cv::Mat grey = cv::Mat::zeros(32, 32, CV_8UC1);
    grey.at<std::uint8_t>(3, 3) = 128;
    CHECK_THROWS_AS(session->synthesize(grey), ContractError);
  }
  SUBCASE("latencies are recorded per call") {
    const std::size_t before = session->latencies().size();
    const cv::Mat flm = sample_flm(32);
    for (int i = 0; i < 5; ++i) session->synthesize(flm);
    CHECK(session->latencies().size() == before + 5);
    CHECK(session->mean_latency_ms() > 0.0);
  }
  SUBCASE("concurrent synthesize matches serial output") {
    const cv::Mat flm = sample_flm(32);
    const RgbdFrame serial = session->synthesize(flm);
    std::vector<RgbdFrame> outs(4);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
      threads.emplace_back([&, t] { outs[t] = session->synthesize(flm); });
    }
    for (auto& t : threads) t.join();
    for (const RgbdFrame& f : outs) {
      CHECK(cv::norm(f.color, serial.color, cv::NORM_INF) == 0);
      CHECK(cv::norm(f.depth8, serial.depth8, cv::NORM_INF) == 0);
    }
  }
}

TEST_CASE("broken checkpoints fail to load") {
  testing::TempDir dir("infer_bad");
  const PipelineConfig cfg = tiny();
  const auto lpips = make_lpips(cfg.lpips);
  Trainer trainer(cfg, lpips.get());
  trainer.save(dir / "t.ckpt", {{1}, {2}});
  std::ifstream in(dir / "t.ckpt", std::ios::binary);
  std::string bytes{std::istreambuf_iterator<char>(in), {}};

  std::ofstream(dir / "cut.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 3);
  CHECK_THROWS_AS(InferenceSession::load(dir / "cut.ckpt"), IoError);

  bytes[8] = 2;
  std::ofstream(dir / "v2.ckpt", std::ios::binary) << bytes;
  CHECK_THROWS_WITH_AS(InferenceSession::load(dir / "v2.ckpt"),
                       doctest::Contains("version mismatch"), IoError);
  CHECK_THROWS_AS(InferenceSession::load(dir / "none.ckpt"), IoError);

  init_weights(trainer.gan().generator().parameters(), 1, 1e300);
  trainer.save(dir / "huge.ckpt", {{1}, {2}});
  CHECK_THROWS_AS(InferenceSession::load(dir / "huge.ckpt"), ValidationError);
}
