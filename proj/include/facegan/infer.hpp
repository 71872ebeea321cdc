#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "facegan/config.hpp"
#include "facegan/generator.hpp"
#include "facegan/preprocess.hpp"

namespace facegan {

/// What a session actually holds in memory.
struct SessionManifest {
  std::vector<std::string> sections;  // checkpoint sections read
  std::size_t generator_parameters = 0;
  bool discriminator_loaded = false;
  bool lpips_loaded = false;
};

/// Fixed-capacity window of recent durations.
class LatencyRing {
 public:
  explicit LatencyRing(std::size_t capacity = 1000);
  void record(double ms);
  std::vector<double> snapshot() const;  // oldest first
  double mean() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<double> buf_;
  std::size_t capacity_;
  std::size_t next_ = 0;
};

/// Inference-only generator: dropout disabled, weights immutable.
class InferenceSession {
 public:
  /// Reads only the config and generator sections, then runs one validation pass.
  static std::unique_ptr<InferenceSession> load(const std::filesystem::path& checkpoint);
  /// Copies the weights of an in-memory generator.
  static std::unique_ptr<InferenceSession> from_generator(const PipelineConfig& cfg,
                                                          const nn::Generator& generator);

  /// 8-bit binary FLM of the generator's size in, 8-bit color + depth codes out.
  RgbdFrame synthesize(const cv::Mat& flm) const;
  /// Normalized [1,1,S,S] in, [1,4,S,S] out.
  nn::Tensor generate(const nn::Tensor& flm) const;

  const PipelineConfig& config() const { return cfg_; }
  const DepthWindow& window() const { return cfg_.window; }
  const SessionManifest& manifest() const { return manifest_; }
  const LatencyRing& latencies() const { return timings_; }
  double mean_latency_ms() const { return timings_.mean(); }

 private:
  InferenceSession(const PipelineConfig& cfg);
  void validate_once();

  PipelineConfig cfg_;
  nn::Generator generator_;
  SessionManifest manifest_;
  mutable LatencyRing timings_;
};

}  // namespace facegan
