#include "facegan/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "facegan/checkpoint.hpp"
#include "facegan/errors.hpp"

namespace facegan {
namespace {

constexpr std::uint64_t kShuffleSalt = 0x5851f42d4c957f2dULL;

void check_finite(double v, const char* term, FrameId id, int epoch) {
  if (!std::isfinite(v)) {
    throw TrainingDiverged("non-finite " + std::string(term) + " loss at epoch " +
                           std::to_string(epoch) + ", sample " + std::to_string(id));
  }
}

std::string encode_split(const FrameSplit& split) {
  ByteWriter w;
  for (const auto* ids : {&split.train, &split.test}) {
    w.u64(ids->size());
    for (FrameId id : *ids) w.i64(id);
  }
  return w.bytes();
}

FrameSplit decode_split(std::string_view bytes) {
  ByteReader r(bytes, "split");
  FrameSplit split;
  for (auto* ids : {&split.train, &split.test}) {
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) ids->push_back(r.i64());
  }
  r.expect_done();
  return split;
}

}  // namespace

double learning_rate(int epoch, const TrainConfig& cfg) {
  if (epoch < 1 || epoch > cfg.epochs) {
    throw ContractError("epoch " + std::to_string(epoch) + " outside 1.." +
                        std::to_string(cfg.epochs));
  }
  if (epoch <= cfg.lr_constant_epochs) return cfg.lr_initial;
  const double progress =
      static_cast<double>(epoch - cfg.lr_constant_epochs) / cfg.lr_decay_epochs;
  return cfg.lr_initial * (1.0 - progress);
}

std::size_t train_count(std::size_t n, double fraction) {
  if (n < 2) throw ValidationError("splitting needs at least 2 samples, got " + std::to_string(n));
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  // Guard against fraction * n landing just below an integer.
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

SplitIndices split_indices(std::size_t n, const TrainConfig& cfg) {
  const std::size_t k = train_count(n, cfg.split_train_fraction);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::string EpochReport::to_json(bool with_time) const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["discriminator"] = discriminator;
  j["gan"] = gan;
  j["feature_matching"] = feature_matching;
  j["l1"] = l1;
  j["lpips"] = lpips;
  j["total"] = total;
  j["raw_l1"] = raw_l1;
  if (val_l1) j["val_l1"] = *val_l1;
  if (with_time) j["wall_seconds"] = wall_seconds;
  return j.dump();
}

std::unique_ptr<LpipsNetwork> make_lpips(const LpipsConfig& cfg) {
  if (cfg.weights_path.empty()) {
    return std::make_unique<LpipsNetwork>(LpipsNetwork::random_features(cfg.seed));
  }
  return std::make_unique<LpipsNetwork>(LpipsNetwork::load(cfg.weights_path));
}

Trainer::Trainer(const PipelineConfig& cfg, const LpipsNetwork* lpips)
    : cfg_(cfg),
      gan_(cfg.generator, cfg.discriminator, cfg.loss, lpips, cfg.train.discriminator_loss_factor),
      adam_g_(gan_.generator().parameters(), cfg.train.adam_beta1, cfg.train.adam_beta2),
      adam_d_(gan_.discriminator().parameters(), cfg.train.adam_beta1,
              cfg.train.adam_beta2),
      rng_(cfg.train.seed ^ kShuffleSalt) {
  cfg_.validate();
  gan_.init(cfg.train.seed, cfg.train.init_stddev);
}

EpochReport Trainer::train_epoch(const std::vector<TrainingSample>& samples, int epoch) {
  if (samples.empty()) throw ValidationError("training set is empty");
  const auto start = std::chrono::steady_clock::now();
  EpochReport report;
  report.epoch = epoch;
  report.lr = learning_rate(epoch, cfg_.train);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);

  for (std::size_t idx : order) {
    const TrainingSample& s = samples[idx];
    nn::GeneratorTrace trace;
    gan_.generator().forward(s.flm, &rng_, &trace);

    adam_d_.zero_grad();
    const DiscriminatorLoss dl = gan_.discriminator_loss(s.flm, s.rgbd, trace.output, true);
    check_finite(dl.total, "discriminator", s.id, epoch);
    adam_d_.step(report.lr);

    adam_g_.zero_grad();
    const GeneratorLoss gl = gan_.generator_loss(s.flm, s.rgbd, trace, true);
    check_finite(gl.gan, "adversarial", s.id, epoch);
    check_finite(gl.feature_matching, "feature-matching", s.id, epoch);
    check_finite(gl.l1, "L1", s.id, epoch);
    check_finite(gl.lpips, "LPIPS", s.id, epoch);
    adam_g_.step(report.lr);

    report.discriminator += dl.total;
    report.gan += gl.gan;
    report.feature_matching += gl.feature_matching;
    report.l1 += gl.l1;
    report.lpips += gl.lpips;
    report.total += gl.total();
    report.raw_l1 += gl.raw_l1;
  }
  const double n = static_cast<double>(samples.size());
  for (double* v : {&report.discriminator, &report.gan, &report.feature_matching, &report.l1,
                    &report.lpips, &report.total, &report.raw_l1}) {
    *v /= n;
  }
  epochs_done_ = epoch;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

double Trainer::mean_l1(const std::vector<TrainingSample>& samples) const {
  if (samples.empty()) throw ValidationError("no samples to evaluate");
  double sum = 0.0;
  for (const TrainingSample& s : samples) {
    const nn::Tensor out = gan_.generator().forward(s.flm, nullptr, nullptr);
    double e = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) e += std::abs(out[i] - s.rgbd[i]);
    sum += e / static_cast<double>(out.size());
  }
  return sum / static_cast<double>(samples.size());
}

void Trainer::save(const std::filesystem::path& path, const FrameSplit& split) const {
  CheckpointFile file;
  file.set("config", cfg_.serialize());
  ByteWriter state;
  state.i64(epochs_done_);
  std::ostringstream rng_text;
  rng_text << rng_;
  state.str(rng_text.str());
  state.u32(best_val_l1_ ? 1 : 0);
  state.f64(best_val_l1_.value_or(0.0));
  file.set("state", state.bytes());
  file.set("split", encode_split(split));
  file.set("generator", encode_parameters(gan_.generator().parameters()));
  file.set("discriminator", encode_parameters(gan_.discriminator().parameters()));
  file.set("adam_g", encode_adam(adam_g_));
  file.set("adam_d", encode_adam(adam_d_));
  file.save(path);
}

FrameSplit Trainer::restore(const std::filesystem::path& path) {
  const CheckpointFile file = CheckpointFile::load(path);
  const PipelineConfig stored = PipelineConfig::parse(file.get("config"));
  if (stored.serialize() != cfg_.serialize()) {
    throw ConfigError("checkpoint " + path.string() + " was trained with a different config");
  }
  decode_parameters(file.get("generator"), gan_.generator().parameters(), "generator");
  decode_parameters(file.get("discriminator"), gan_.discriminator().parameters(), "discriminator");
  decode_adam(file.get("adam_g"), adam_g_, "adam_g");
  decode_adam(file.get("adam_d"), adam_d_, "adam_d");
  ByteReader state(file.get("state"), "state");
  epochs_done_ = static_cast<int>(state.i64());
  std::istringstream rng_text(state.str());
  rng_text >> rng_;
  if (!rng_text) throw IoError("checkpoint " + path.string() + ": corrupt RNG state");
  const bool has_best = state.u32() != 0;
  const double best = state.f64();
  best_val_l1_ = has_best ? std::optional<double>(best) : std::nullopt;
  state.expect_done();
  return decode_split(file.get("split"));
}

FrameSplit read_checkpoint_split(const std::filesystem::path& checkpoint) {
  return decode_split(CheckpointFile::load(checkpoint, {"split"}).get("split"));
}

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04d.ckpt", epoch);
  return buf;
}

TrainResult run_training(const std::filesystem::path& dataset_root, const PipelineConfig& cfg,
                         const TrainOptions& options) {
  cfg.validate();
  const PreflightReport pre = preflight(dataset_root, cfg.generator.image_size);
  if (!pre.ok()) throw ValidationError(pre.summary());

  const DatasetLayout layout{dataset_root};
  const DatasetMeta meta = DatasetMeta::load(layout.meta());
  FrameSplit split;
  if (meta.test_split) {
    split.test = *meta.test_split;
    std::sort(split.test.begin(), split.test.end());
    for (FrameId id : pre.frames)
      if (!std::binary_search(split.test.begin(), split.test.end(), id)) split.train.push_back(id);
  } else {
    auto [train, test] = split_dataset(pre.frames, cfg.train);
    split = {std::move(train), std::move(test)};
  }

  std::filesystem::create_directories(options.out_dir);
  const auto lpips = make_lpips(cfg.lpips);
  Trainer trainer(cfg, lpips.get());
  if (options.resume) {
    const FrameSplit stored = trainer.restore(*options.resume);
    if (stored.train != split.train || stored.test != split.test) {
      throw ValidationError("resume checkpoint was trained on a different split");
    }
    spdlog::info("resumed from {} after epoch {}", options.resume->string(),
                 trainer.epochs_done());
  }
  cfg.save(options.out_dir / "config.txt");

  const auto train = load_samples(layout, split.train);
  const auto test = load_samples(layout, split.test);
  spdlog::info("training on {} frames, {} held out", train.size(), test.size());

  TrainResult result;
  result.split = split;
  std::ofstream log(options.out_dir / "train_log.jsonl", std::ios::app);
  if (!log) throw IoError("cannot write train log in " + options.out_dir.string());
  std::vector<std::filesystem::path> periodic;

  for (int epoch = trainer.epochs_done() + 1; epoch <= cfg.train.epochs; ++epoch) {
    EpochReport report = trainer.train_epoch(train, epoch);
    if (!test.empty()) report.val_l1 = trainer.mean_l1(test);
    log << report.to_json() << "\n" << std::flush;
    spdlog::info("epoch {}/{} lr {:.3g} total {:.4f} raw L1 {:.4f}", epoch, cfg.train.epochs,
                 report.lr, report.total, report.raw_l1);
    result.reports.push_back(report);

    if (report.val_l1 && (!trainer.best_val_l1() || *report.val_l1 < *trainer.best_val_l1())) {
      trainer.set_best_val_l1(*report.val_l1);
      trainer.save(options.out_dir / "best.ckpt", split);
    }
    const bool interrupt = options.stop_after && epoch == *options.stop_after;
    if (epoch % cfg.train.checkpoint_every == 0 || interrupt) {
      const auto path = options.out_dir / checkpoint_name(epoch);
      trainer.save(path, split);
      periodic.push_back(path);
      while (periodic.size() > static_cast<std::size_t>(cfg.train.keep_last)) {
        std::filesystem::remove(periodic.front());
        periodic.erase(periodic.begin());
      }
      result.checkpoint = path;
    }
    if (interrupt) {
      result.interrupted = true;
      return result;
    }
  }
  result.checkpoint = options.out_dir / "final.ckpt";
  trainer.save(result.checkpoint, split);
  return result;
}

}  // namespace facegan
