#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "doctest.h"
#include "facegan/errors.hpp"
#include "facegan/optimizer.hpp"
#include "facegan/training.hpp"
#include "toy_dataset.hpp"

using namespace facegan;

namespace {

PipelineConfig tiny(int epochs) {
  PipelineConfig cfg = testing::toy_config(32, epochs);
  cfg.generator.base_width = 4;
  cfg.discriminator.base_width = 4;
  return cfg;
}

std::vector<TrainingSample> random_samples(int count, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution on(0.05);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<TrainingSample> out;
  for (int i = 0; i < count; ++i) {
    TrainingSample s;
    s.id = i;
    s.flm = nn::Tensor({1, 1, size, size});
    for (double& v : s.flm.values()) v = on(rng) ? 1.0 : -1.0;
    s.rgbd = nn::Tensor({1, 4, size, size});
    for (double& v : s.rgbd.values()) v = u(rng);
    out.push_back(std::move(s));
  }
  return out;
}

std::uint64_t generator_hash(const Trainer& t) {
  return parameter_hash(t.gan().generator().parameters());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("learning rate schedule") {
  const TrainConfig c;
  CHECK(learning_rate(1, c) == 0.0002);
  CHECK(learning_rate(15, c) == 0.0002);
  CHECK(learning_rate(30, c) == 0.0002);
  CHECK(learning_rate(65, c) == doctest::Approx(0.0001).epsilon(1e-12));
  CHECK(learning_rate(100, c) == 0.0);
  double prev = learning_rate(1, c);
  for (int e = 2; e <= 100; ++e) {
    const double lr = learning_rate(e, c);
    CHECK(lr <= prev);
    CHECK(prev - lr <= 0.0002 / 70 + 1e-15);
    prev = lr;
  }
  CHECK_THROWS_AS(learning_rate(0, c), ContractError);
  CHECK_THROWS_AS(learning_rate(101, c), ContractError);
}

TEST_CASE("train/test split sizes") {
  const double f = TrainConfig{}.split_train_fraction;
  CHECK(train_count(1445, f) == 1238);
  CHECK(train_count(10, f) == 8);
  CHECK(train_count(7, f) == 6);
  CHECK(train_count(2, f) == 1);
  CHECK(train_count(100, 0.999) == 99);
  CHECK(train_count(100, 0.001) == 1);
  CHECK_THROWS_AS(train_count(1, f), ValidationError);
}

TEST_CASE("split is seeded, disjoint and exhaustive") {
  TrainConfig c;
  const SplitIndices a = split_indices(1445, c);
  const SplitIndices b = split_indices(1445, c);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.train.size() == 1238);
  CHECK(a.test.size() == 207);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  for (std::size_t i : a.test) CHECK(all.insert(i).second);
  CHECK(all.size() == 1445);
  CHECK(*all.rbegin() == 1444);

  c.seed += 1;
  CHECK(split_indices(1445, c).test != a.test);

  const std::vector<std::string> names{"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
  const auto [train, test] = split_dataset(names, TrainConfig{});
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
}

TEST_CASE("zero learning rate is a fixed point") {
  PipelineConfig cfg = tiny(2);
  cfg.train.lr_initial = 0.0;
  const auto lpips = make_lpips(cfg.lpips);
  Trainer t(cfg, lpips.get());
  const std::uint64_t before = generator_hash(t);
  const std::uint64_t d_before = parameter_hash(std::as_const(t).gan().discriminator().parameters());
  const EpochReport r = t.train_epoch(random_samples(2, 32, 3), 1);
  CHECK(r.lr == 0.0);
  CHECK(std::isfinite(r.total));
  CHECK(generator_hash(t) == before);
  CHECK(parameter_hash(std::as_const(t).gan().discriminator().parameters()) == d_before);
}

TEST_CASE("a training step moves the weights and reports finite terms") {
  const PipelineConfig cfg = tiny(2);
  const auto lpips = make_lpips(cfg.lpips);
  Trainer t(cfg, lpips.get());
  const std::uint64_t before = generator_hash(t);
  const EpochReport r = t.train_epoch(random_samples(2, 32, 3), 1);
  CHECK(generator_hash(t) != before);
  CHECK(t.epochs_done() == 1);
  CHECK(r.total == doctest::Approx(r.gan + r.feature_matching + r.l1 + r.lpips));
  CHECK(r.l1 == doctest::Approx(cfg.loss.lambda_l1 * r.raw_l1));
  CHECK(r.raw_l1 > 0.0);
  CHECK(r.to_json(false).find("wall_seconds") == std::string::npos);
  CHECK(r.to_json().find("\"epoch\":1") != std::string::npos);
}

TEST_CASE("empty and divergent training sets") {
  const PipelineConfig cfg = tiny(2);
  const auto lpips = make_lpips(cfg.lpips);
  Trainer t(cfg, lpips.get());
  CHECK_THROWS_AS(t.train_epoch({}, 1), ValidationError);

  auto samples = random_samples(1, 32, 5);
  samples[0].id = 77;
  samples[0].rgbd[10] = std::numeric_limits<double>::quiet_NaN();
  try {
    t.train_epoch(samples, 1);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch 1") != std::string::npos);
    CHECK(msg.find("sample 77") != std::string::npos);
  }
}

TEST_CASE("run_training: zero epochs, resume and determinism") {
  testing::TempDir dir("training");
  const auto data = dir / "data";
  testing::make_toy_dataset(data, 4, 32);

  SUBCASE("zero epochs writes the initial weights") {
    const PipelineConfig cfg = tiny(0);
    const TrainResult r = run_training(data, cfg, {dir / "zero"});
    CHECK(r.reports.empty());
    CHECK(r.checkpoint.filename() == "final.ckpt");
    CHECK(std::filesystem::exists(r.checkpoint));
    CHECK(std::filesystem::exists(dir / "zero" / "config.txt"));
    CHECK(r.split.train.size() == 3);
    CHECK(r.split.test.size() == 1);
    const FrameSplit stored = read_checkpoint_split(r.checkpoint);
    CHECK(stored.train == r.split.train);
    CHECK(stored.test == r.split.test);

    const auto lpips = make_lpips(cfg.lpips);
    Trainer fresh(cfg, lpips.get());
    Trainer loaded(cfg, lpips.get());
    init_weights(loaded.gan().generator().parameters(), 99);
    loaded.restore(r.checkpoint);
    CHECK(generator_hash(loaded) == generator_hash(fresh));
  }

  SUBCASE("two runs are bit-identical; resume matches an uninterrupted run") {
    PipelineConfig cfg = tiny(4);
    cfg.train.checkpoint_every = 2;
    const TrainResult a = run_training(data, cfg, {dir / "a"});
    const TrainResult b = run_training(data, cfg, {dir / "b"});
    REQUIRE(a.reports.size() == 4);
    CHECK(slurp(a.checkpoint) == slurp(b.checkpoint));
    for (std::size_t i = 0; i < a.reports.size(); ++i) {
      CHECK(a.reports[i].to_json(false) == b.reports[i].to_json(false));
    }
    CHECK(std::filesystem::exists(dir / "a" / "epoch_0002.ckpt"));
    CHECK(std::filesystem::exists(dir / "a" / "best.ckpt"));

    TrainOptions first{dir / "c"};
    first.stop_after = 1;
    const TrainResult c1 = run_training(data, cfg, first);
    CHECK(c1.interrupted);
    CHECK(c1.checkpoint.filename() == "epoch_0001.ckpt");
    CHECK_FALSE(std::filesystem::exists(dir / "c" / "final.ckpt"));

    TrainOptions second{dir / "c"};
    second.resume = c1.checkpoint;
    const TrainResult c2 = run_training(data, cfg, second);
    CHECK(c2.reports.size() == 3);
    CHECK(c2.reports.front().epoch == 2);
    CHECK(slurp(c2.checkpoint) == slurp(a.checkpoint));

    PipelineConfig other = cfg;
    other.loss.lambda_l1 = 1.0;
    TrainOptions mismatched{dir / "d"};
    mismatched.resume = c1.checkpoint;
    CHECK_THROWS_AS(run_training(data, other, mismatched), ConfigError);
  }
}
