#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "facegan/errors.hpp"
#include "facegan/gan.hpp"
#include "facegan/optimizer.hpp"
#include "gradcheck.hpp"
#include "model_fixtures.hpp"

using namespace facegan;
using namespace facegan::nn;
using facegan::testing::check_gradients;
using facegan::testing::random_tensor;

namespace {

Tensor binary_flm(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution on(0.1);
  Tensor t({1, 1, size, size}, -1.0);
  for (double& v : t.values()) v = on(rng) ? 1.0 : -1.0;
  return t;
}

// Pure scalar loops over score matrices, written from the formula.
double oracle_discriminator(const PatchResponse& real, const PatchResponse& fake) {
  double sum = 0.0;
  for (std::size_t k = 0; k < real.num_scales(); ++k) {
    double r = 0.0, f = 0.0;
    const Tensor& sr = real.scores(k);
    const Tensor& sf = fake.scores(k);
    for (std::size_t i = 0; i < sr.size(); ++i) r += (sr[i] - 1.0) * (sr[i] - 1.0);
    for (std::size_t i = 0; i < sf.size(); ++i) f += sf[i] * sf[i];
    sum += r / sr.size() + f / sf.size();
  }
  return 0.5 * sum;
}

PatchResponse constant_response(const std::vector<Shape>& score_shapes, double v) {
  PatchResponse r;
  for (const Shape& s : score_shapes) {
    PatchTrace t;
    t.features.push_back(Tensor(s, v));
    r.scales.push_back(t);
  }
  return r;
}

}  // namespace

TEST_CASE("generator output shape, range and determinism") {
  auto cfg = facegan::testing::mini_generator();
  Generator g(cfg);
  init_weights(g.parameters(), 7);
  const Tensor zero({1, 1, 32, 32}, 0.0);
  const Tensor y = g.forward(zero, nullptr);
  CHECK(y.shape() == Shape{1, 4, 32, 32});
  CHECK(y.all_finite());
  for (double v : y.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  const Tensor y2 = g.forward(zero, nullptr);
  CHECK(std::equal(y.values().begin(), y.values().end(), y2.values().begin()));

  Tensor x = binary_flm(32, 3);
  Tensor neg = x;
  neg *= -1.0;
  const Tensor a = g.forward(x, nullptr);
  const Tensor b = g.forward(neg, nullptr);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i] != b[i];
  CHECK(differs);

  CHECK_THROWS_AS(g.forward(Tensor({1, 1, 16, 16}), nullptr), ContractError);
  CHECK_THROWS_AS(g.forward(Tensor({1, 3, 32, 32}), nullptr), ContractError);
}

TEST_CASE("generator widths and dropout placement follow the U-Net scheme") {
  GeneratorConfig cfg;  // 512, base 64, depth 8
  CHECK_NOTHROW(cfg.validate());
  Generator g(cfg);
  const int expected[] = {64, 128, 256, 512, 512, 512, 512, 512};
  for (int i = 0; i < 8; ++i) CHECK(g.level_width(i) == expected[i]);
  for (int i = 0; i < 8; ++i) CHECK(g.has_dropout(i) == (i >= 4 && i <= 6));
}

TEST_CASE("inference forward leaves the generator state untouched") {
  Generator g(facegan::testing::mini_generator());
  init_weights(g.parameters(), 1);
  const auto before = parameter_hash(std::as_const(g).parameters());
  g.forward(binary_flm(32, 1), nullptr);
  CHECK(parameter_hash(std::as_const(g).parameters()) == before);
}

TEST_CASE("discriminator patch shapes follow the conv-shape arithmetic") {
  auto cfg = facegan::testing::mini_discriminator();
  MultiScaleDiscriminator d(cfg);
  init_weights(d.parameters(), 2);
  const Tensor rgbd = random_tensor({1, 4, 32, 32}, 1);
  const Tensor flm = binary_flm(32, 2);
  const PatchResponse r = d.forward(rgbd, flm);
  REQUIRE(r.num_scales() == 3);
  // k=4; stride 2 then 1; padding 2: out = floor((in + 4 - 4) / s) + 1.
  auto closed_form = [](int in, int layers) {
    for (int i = 0; i < layers; ++i) in = in / 2 + 1;
    return in + 2;
  };
  int size = 32;
  for (std::size_t k = 0; k < 3; ++k) {
    const int side = closed_form(size, cfg.layers_per_scale);
    CHECK(r.scores(k).shape() == Shape{1, 1, side, side});
    CHECK(r.scales[k].features.size() == static_cast<std::size_t>(cfg.layers_per_scale + 2));
    size /= 2;
  }
  CHECK(r.scores(0).h() > r.scores(1).h());
  CHECK(r.scores(1).h() > r.scores(2).h());
  CHECK_THROWS_AS(d.forward(rgbd, Tensor({1, 1, 16, 16})), ContractError);
}

TEST_CASE("zero-weight discriminator scores zero everywhere") {
  MultiScaleDiscriminator d(facegan::testing::mini_discriminator());
  for (Parameter* p : d.parameters()) p->value.fill(0.0);
  const PatchResponse r = d.forward(random_tensor({1, 4, 32, 32}, 3), binary_flm(32, 4));
  for (std::size_t k = 0; k < 3; ++k) {
    for (double v : r.scores(k).values()) CHECK(v == 0.0);
  }
}

TEST_CASE("discriminator treats batch samples independently") {
  MultiScaleDiscriminator d(facegan::testing::mini_discriminator());
  init_weights(d.parameters(), 5);
  const Tensor rgbd = random_tensor({2, 4, 32, 32}, 6);
  const Tensor flm = random_tensor({2, 1, 32, 32}, 7);
  // Build the permuted batch [1, 0].
  Tensor perm_rgbd({2, 4, 32, 32}), perm_flm({2, 1, 32, 32});
  std::copy(rgbd.plane(1, 0), rgbd.plane(1, 0) + 4 * 1024, perm_rgbd.plane(0, 0));
  std::copy(rgbd.plane(0, 0), rgbd.plane(0, 0) + 4 * 1024, perm_rgbd.plane(1, 0));
  std::copy(flm.plane(1, 0), flm.plane(1, 0) + 1024, perm_flm.plane(0, 0));
  std::copy(flm.plane(0, 0), flm.plane(0, 0) + 1024, perm_flm.plane(1, 0));
  const PatchResponse a = d.forward(rgbd, flm);
  const PatchResponse b = d.forward(perm_rgbd, perm_flm);
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor a0 = slice_batch(a.scores(k), 0), a1 = slice_batch(a.scores(k), 1);
    const Tensor b0 = slice_batch(b.scores(k), 0), b1 = slice_batch(b.scores(k), 1);
    for (std::size_t i = 0; i < a0.size(); ++i) {
      CHECK(a0[i] == b1[i]);
      CHECK(a1[i] == b0[i]);
    }
  }
}

TEST_CASE("discriminator loss examples") {
  const std::vector<Shape> shapes = {{1, 1, 7, 7}, {1, 1, 5, 5}, {1, 1, 4, 4}};
  SUBCASE("perfect discriminator") {
    CHECK(loss_discriminator(constant_response(shapes, 1.0), constant_response(shapes, 0.0)).total == 0.0);
  }
  SUBCASE("all scores one half") {
    const auto loss = loss_discriminator(constant_response(shapes, 0.5), constant_response(shapes, 0.5));
    for (double t : loss.per_scale) CHECK(t == doctest::Approx(0.5));
    CHECK(loss.total == doctest::Approx(0.75));
  }
  SUBCASE("random responses match the scalar-loop oracle") {
    MultiScaleDiscriminator d(facegan::testing::mini_discriminator());
    init_weights(d.parameters(), 8);
    const Tensor flm = binary_flm(32, 9);
    const PatchResponse real = d.forward(random_tensor({1, 4, 32, 32}, 10), flm);
    const PatchResponse fake = d.forward(random_tensor({1, 4, 32, 32}, 11), flm);
    const auto loss = loss_discriminator(real, fake);
    CHECK(loss.total == doctest::Approx(oracle_discriminator(real, fake)).epsilon(1e-12));
    // Dropping a scale removes exactly that scale's term.
    PatchResponse real2 = real, fake2 = fake;
    real2.scales.pop_back();
    fake2.scales.pop_back();
    const auto reduced = loss_discriminator(real2, fake2);
    CHECK(loss.total - reduced.total == doctest::Approx(0.5 * loss.per_scale[2]).epsilon(1e-12));
  }
}

TEST_CASE("generator loss fixed point and term oracle") {
  const LossWeights defaults;
  CHECK(defaults.lambda_fm == 10.0);
  CHECK(defaults.lambda_l1 == 100.0);
  CHECK(defaults.lambda_lpips == 10.0);

  const LpipsNetwork lpips = LpipsNetwork::random_features(3);
  MultiScaleDiscriminator d(facegan::testing::mini_discriminator());
  init_weights(d.parameters(), 12);
  const Tensor flm = binary_flm(32, 13);
  const Tensor y = random_tensor({1, 4, 32, 32}, 14);

  SUBCASE("identical output with scores at one gives zero") {
    const PatchResponse r = d.forward(y, flm);
    PatchResponse fake = r;
    for (auto& s : fake.scales) s.features.back().fill(1.0);
    const GeneratorLoss loss = loss_generator(y, y, r, fake, defaults, &lpips);
    CHECK(loss.gan == 0.0);
    CHECK(loss.feature_matching == 0.0);
    CHECK(loss.l1 == 0.0);
    CHECK(loss.lpips == 0.0);
    CHECK(loss.total() == 0.0);
  }

  SUBCASE("random inputs match the term-by-term oracle") {
    const Tensor fake = random_tensor({1, 4, 32, 32}, 15);
    const PatchResponse rr = d.forward(y, flm);
    const PatchResponse fr = d.forward(fake, flm);
    const GeneratorLoss loss = loss_generator(y, fake, rr, fr, defaults, &lpips);

    double gan = 0.0, fm = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const Tensor& s = fr.scores(k);
      double a = 0.0;
      for (double v : s.values()) a += (v - 1.0) * (v - 1.0);
      gan += a / s.size();
      const auto& ff = fr.scales[k].features;
      const auto& rf = rr.scales[k].features;
      double layer_sum = 0.0;
      for (std::size_t j = 0; j + 1 < ff.size(); ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < ff[j].size(); ++i) m += std::abs(ff[j][i] - rf[j][i]);
        layer_sum += m / ff[j].size();
      }
      fm += layer_sum / (ff.size() - 1);
    }
    double l1 = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) l1 += std::abs(y[i] - fake[i]);
    l1 /= y.size();
    const double lp = lpips.distance(slice_channels(y, 0, 3), slice_channels(fake, 0, 3));

    CHECK(loss.gan == doctest::Approx(gan).epsilon(1e-12));
    CHECK(loss.feature_matching == doctest::Approx(10.0 * fm).epsilon(1e-12));
    CHECK(loss.l1 == doctest::Approx(100.0 * l1).epsilon(1e-12));
    CHECK(loss.lpips == doctest::Approx(10.0 * lp).epsilon(1e-12));
    CHECK(loss.total() == loss.gan + loss.feature_matching + loss.l1 + loss.lpips);

    // Zero weights leave the pure adversarial objective.
    const GeneratorLoss pure = loss_generator(y, fake, rr, fr, LossWeights{0, 0, 0}, nullptr);
    CHECK(pure.total() == pure.gan);
    CHECK(pure.gan == loss.gan);

    // Each weight scales its own term linearly.
    const LossWeights doubled{20, 200, 20};
    const GeneratorLoss twice = loss_generator(y, fake, rr, fr, doubled, &lpips);
    CHECK(twice.total() - pure.total() ==
          doctest::Approx(2.0 * (loss.total() - pure.total())).epsilon(1e-12));
  }

  SUBCASE("missing perceptual metric is an error unless its weight is zero") {
    const PatchResponse r = d.forward(y, flm);
    CHECK_THROWS_AS(loss_generator(y, y, r, r, defaults, nullptr), ContractError);
    CHECK_NOTHROW(loss_generator(y, y, r, r, LossWeights{10, 100, 0}, nullptr));
  }
}

TEST_CASE("weight initialization statistics") {
  Parameter p("big.weight", {1, 1, 1000, 1000});
  init_weights({&p}, 42);
  const double n = static_cast<double>(p.value.size());
  const double mean = std::accumulate(p.value.values().begin(), p.value.values().end(), 0.0) / n;
  double var = 0.0;
  for (double v : p.value.values()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (n - 1));
  CHECK(std::abs(mean) < 3.0 * 0.02 / std::sqrt(n));
  CHECK(sd == doctest::Approx(0.02).epsilon(0.05));

  Parameter q("big.weight", {1, 1, 1000, 1000});
  init_weights({&q}, 42);
  CHECK(std::equal(p.value.values().begin(), p.value.values().end(), q.value.values().begin()));

  Parameter b("x.bias", {1, 4, 1, 1});
  b.value.fill(3.0);
  init_weights({&b}, 1);
  for (double v : b.value.values()) CHECK(v == 0.0);
}
