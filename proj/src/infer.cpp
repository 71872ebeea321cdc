#include "facegan/infer.hpp"

#include <chrono>
#include <numeric>

#include "facegan/checkpoint.hpp"
#include "facegan/dataset.hpp"
#include "facegan/errors.hpp"

namespace facegan {

LatencyRing::LatencyRing(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ContractError("latency ring needs a positive capacity");
  buf_.reserve(capacity);
}

void LatencyRing::record(double ms) {
  std::lock_guard lock(mu_);
  if (buf_.size() < capacity_) {
    buf_.push_back(ms);
  } else {
    buf_[next_] = ms;
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<double> LatencyRing::snapshot() const {
  std::lock_guard lock(mu_);
  if (buf_.size() < capacity_) return buf_;
  std::vector<double> out(buf_.begin() + static_cast<std::ptrdiff_t>(next_), buf_.end());
  out.insert(out.end(), buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(next_));
  return out;
}

double LatencyRing::mean() const {
  std::lock_guard lock(mu_);
  if (buf_.empty()) return 0.0;
  return std::accumulate(buf_.begin(), buf_.end(), 0.0) / static_cast<double>(buf_.size());
}

std::size_t LatencyRing::size() const {
  std::lock_guard lock(mu_);
  return buf_.size();
}

InferenceSession::InferenceSession(const PipelineConfig& cfg)
    : cfg_(cfg), generator_(cfg.generator) {}

std::unique_ptr<InferenceSession> InferenceSession::load(const std::filesystem::path& checkpoint) {
  const CheckpointFile file = CheckpointFile::load(checkpoint, {"config", "generator"});
  const PipelineConfig cfg = PipelineConfig::parse(file.get("config"));
  cfg.validate();
  std::unique_ptr<InferenceSession> s(new InferenceSession(cfg));
  decode_parameters(file.get("generator"), s->generator_.parameters(), "generator");
  s->manifest_.sections = file.section_names();
  s->validate_once();
  return s;
}

std::unique_ptr<InferenceSession> InferenceSession::from_generator(const PipelineConfig& cfg,
                                                                   const nn::Generator& generator) {
  std::unique_ptr<InferenceSession> s(new InferenceSession(cfg));
  const auto src = generator.parameters();
  const auto dst = s->generator_.parameters();
  if (src.size() != dst.size()) throw ContractError("generator layout does not match config");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!(src[i]->value.shape() == dst[i]->value.shape())) {
      throw ContractError("generator layout does not match config");
    }
    dst[i]->value = src[i]->value;
  }
  s->validate_once();
  return s;
}

void InferenceSession::validate_once() {
  std::size_t count = 0;
  for (const nn::Parameter* p : std::as_const(generator_).parameters()) count += p->value.size();
  manifest_.generator_parameters = count;
  const int n = cfg_.generator.image_size;
  const nn::Tensor blank({1, 1, n, n}, -1.0);
  if (!generator_.forward(blank, nullptr, nullptr).all_finite()) {
    throw ValidationError("generator produced non-finite output on the validation pass");
  }
}

nn::Tensor InferenceSession::generate(const nn::Tensor& flm) const {
  const auto start = std::chrono::steady_clock::now();
  nn::Tensor out = generator_.forward(flm, nullptr, nullptr);
  timings_.record(
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  return out;
}

RgbdFrame InferenceSession::synthesize(const cv::Mat& flm) const {
  const int n = cfg_.generator.image_size;
  if (flm.type() != CV_8UC1 || flm.rows != n || flm.cols != n) {
    throw ContractError("FLM must be 8-bit single-channel " + std::to_string(n) + "x" +
                        std::to_string(n));
  }
  if (cv::countNonZero((flm != 0) & (flm != 255)) != 0) {
    throw ContractError("FLM must be binary (0 or 255)");
  }
  return tensor_to_rgbd(generate(flm_to_tensor(flm)), cfg_.window);
}

}  // namespace facegan
