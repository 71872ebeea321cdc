#include <fstream>

#include "doctest.h"
#include "facegan/checkpoint.hpp"
#include "facegan/errors.hpp"
#include "facegan/generator.hpp"
#include "facegan/optimizer.hpp"
#include "model_fixtures.hpp"
#include "toy_dataset.hpp"

using namespace facegan;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void dump(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("byte codec round trip") {
  ByteWriter w;
  w.u32(0xdeadbeef);
  w.u64(1ULL << 60);
  w.i64(-42);
  w.f64(-0.1);
  w.str("dé");
  nn::Tensor t({1, 2, 3, 1}, std::vector<double>{1, 2, 3, 4, 5, 6.5});
  w.tensor(t);

  ByteReader r(w.bytes(), "test");
  CHECK(r.u32() == 0xdeadbeef);
  CHECK(r.u64() == (1ULL << 60));
  CHECK(r.i64() == -42);
  CHECK(r.f64() == -0.1);
  CHECK(r.str() == "dé");
  const nn::Tensor back = r.tensor();
  CHECK(back.shape() == t.shape());
  CHECK(back[5] == 6.5);
  CHECK(r.done());
  CHECK_THROWS_AS(r.u32(), IoError);

  // little-endian on disk
  CHECK(static_cast<unsigned char>(w.bytes()[0]) == 0xef);
}

TEST_CASE("checkpoint file round trip and selective load") {
  testing::TempDir dir("ckpt");
  CheckpointFile f;
  f.set("alpha", "one");
  f.set("beta", std::string(1000, '\0'));
  f.set("empty", "");
  f.save(dir / "a.ckpt");

  const CheckpointFile all = CheckpointFile::load(dir / "a.ckpt");
  CHECK(all.section_names() == std::vector<std::string>{"alpha", "beta", "empty"});
  CHECK(all.get("alpha") == "one");
  CHECK(all.get("beta").size() == 1000);
  CHECK(all.get("empty").empty());

  const CheckpointFile some = CheckpointFile::load(dir / "a.ckpt", {"alpha"});
  CHECK(some.has("alpha"));
  CHECK_FALSE(some.has("beta"));
  CHECK_THROWS_AS(CheckpointFile::load(dir / "a.ckpt", {"gamma"}), IoError);
  CHECK_THROWS_AS(CheckpointFile::load(dir / "missing.ckpt"), IoError);
}

TEST_CASE("corrupt checkpoints are rejected") {
  testing::TempDir dir("ckpt_bad");
  CheckpointFile f;
  f.set("alpha", std::string(64, 'x'));
  f.save(dir / "a.ckpt");
  const std::string bytes = slurp(dir / "a.ckpt");

  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, bytes.size() / 2,
                          bytes.size() - 1}) {
    dump(dir / "t.ckpt", bytes.substr(0, cut));
    CHECK_THROWS_AS(CheckpointFile::load(dir / "t.ckpt"), IoError);
  }

  dump(dir / "t.ckpt", bytes + "junk");
  CHECK_THROWS_AS(CheckpointFile::load(dir / "t.ckpt"), IoError);

  std::string bumped = bytes;
  bumped[8] = 7;
  dump(dir / "t.ckpt", bumped);
  try {
    CheckpointFile::load(dir / "t.ckpt");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("checkpoint version mismatch (expected 1, found 7)") !=
          std::string::npos);
  }

  std::string magic = bytes;
  magic[0] = 'X';
  dump(dir / "t.ckpt", magic);
  CHECK_THROWS_AS(CheckpointFile::load(dir / "t.ckpt"), IoError);
}

TEST_CASE("parameters and optimizer state round trip") {
  nn::Generator a(testing::mini_generator());
  nn::Generator b(testing::mini_generator());
  init_weights(a.parameters(), 1);
  init_weights(b.parameters(), 2);
  const auto ca = std::as_const(a).parameters();
  const auto cb = std::as_const(b).parameters();
  REQUIRE(parameter_hash(ca) != parameter_hash(cb));

  decode_parameters(encode_parameters(ca), b.parameters(), "generator");
  CHECK(parameter_hash(ca) == parameter_hash(cb));

  Adam adam(a.parameters(), 0.5, 0.999);
  for (auto* p : a.parameters()) p->grad.fill(0.25);
  adam.step(1e-3);
  Adam other(b.parameters(), 0.5, 0.999);
  decode_adam(encode_adam(adam), other, "adam");
  CHECK(other.steps() == 1);
  CHECK(other.first_moments()[0][0] == adam.first_moments()[0][0]);
  CHECK(other.second_moments().back()[0] == adam.second_moments().back()[0]);

  GeneratorConfig wide = testing::mini_generator();
  wide.base_width = 8;
  nn::Generator c(wide);
  CHECK_THROWS_AS(decode_parameters(encode_parameters(ca), c.parameters(), "generator"),
                  ValidationError);
}
