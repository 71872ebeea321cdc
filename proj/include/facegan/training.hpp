#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "facegan/config.hpp"
#include "facegan/dataset.hpp"
#include "facegan/gan.hpp"
#include "facegan/optimizer.hpp"

namespace facegan {

/// lr_initial through lr_constant_epochs, then linear decay to 0 at `epochs`.
/// Epochs are 1-based.
double learning_rate(int epoch, const TrainConfig& cfg);

/// floor(fraction * n), clamped to [1, n - 1].
std::size_t train_count(std::size_t n, double fraction);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle of 0..n-1, then the first train_count(n) go to training.
SplitIndices split_indices(std::size_t n, const TrainConfig& cfg);

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_dataset(const std::vector<T>& items,
                                                        const TrainConfig& cfg) {
  const SplitIndices idx = split_indices(items.size(), cfg);
  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i : idx.train) out.first.push_back(items[i]);
  for (std::size_t i : idx.test) out.second.push_back(items[i]);
  return out;
}

struct FrameSplit {
  std::vector<FrameId> train;
  std::vector<FrameId> test;
};

struct EpochReport {
  int epoch = 0;
  double discriminator = 0.0;
  double gan = 0.0;
  double feature_matching = 0.0;
  double l1 = 0.0;
  double lpips = 0.0;
  double total = 0.0;
  /// Unweighted mean |y - G(x)| over all four channels.
  double raw_l1 = 0.0;
  double lr = 0.0;
  std::optional<double> val_l1;
  double wall_seconds = 0.0;

  /// One JSON object; `with_time = false` drops the wall clock.
  std::string to_json(bool with_time = true) const;
};

/// Non-finite loss during training.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Random-feature backbone when no weights path is configured.
std::unique_ptr<LpipsNetwork> make_lpips(const LpipsConfig& cfg);

/// Per-step alternation: discriminator update, then generator update.
class Trainer {
 public:
  Trainer(const PipelineConfig& cfg, const LpipsNetwork* lpips);

  /// 1-based epoch; consumes the trainer RNG for shuffling and dropout.
  EpochReport train_epoch(const std::vector<TrainingSample>& samples, int epoch);

  /// Inference-mode mean |y - G(x)|.
  double mean_l1(const std::vector<TrainingSample>& samples) const;

  void save(const std::filesystem::path& path, const FrameSplit& split) const;
  /// Restores weights, optimizer moments, RNG and counters. Returns the split.
  FrameSplit restore(const std::filesystem::path& path);

  RgbdGan& gan() { return gan_; }
  const RgbdGan& gan() const { return gan_; }
  const PipelineConfig& config() const { return cfg_; }
  int epochs_done() const { return epochs_done_; }
  std::optional<double> best_val_l1() const { return best_val_l1_; }
  void set_best_val_l1(double v) { best_val_l1_ = v; }

 private:
  PipelineConfig cfg_;
  RgbdGan gan_;
  Adam adam_g_;
  Adam adam_d_;
  std::mt19937_64 rng_;
  int epochs_done_ = 0;
  std::optional<double> best_val_l1_;
};

struct TrainOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  /// Leave after this epoch as if interrupted (checkpoint written, no final).
  std::optional<int> stop_after;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::vector<EpochReport> reports;
  FrameSplit split;
  bool interrupted = false;
};

std::string checkpoint_name(int epoch);

/// Train/test ids stored in a checkpoint.
FrameSplit read_checkpoint_split(const std::filesystem::path& checkpoint);

/// Trains on the dataset's FLM crops. Writes `train_log.jsonl`,
/// `config.txt`, periodic `epoch_NNNN.ckpt`, `best.ckpt` and `final.ckpt`.
TrainResult run_training(const std::filesystem::path& dataset_root, const PipelineConfig& cfg,
                         const TrainOptions& options);

}  // namespace facegan
