#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <opencv2/core.hpp>
#include <spdlog/spdlog.h>

#include "facegan/dataset.hpp"
#include "facegan/errors.hpp"
#include "facegan/landmarks.hpp"
#include "facegan/pipeline.hpp"
#include "facegan/synthetic.hpp"
#include "facegan/training.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

facegan::PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return facegan::PipelineConfig{};
  return facegan::PipelineConfig::load(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGBD face synthesis from facial landmark maps"};
  app.require_subcommand(1);
  bool deterministic = false;
  bool verbose = false;
  app.add_flag("--deterministic", deterministic, "Single-threaded, order-stable execution");
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string in_dir, out_dir, data_dir, config_path, ckpt, flm, ply_path, backend, resume;
  int near_mm = 0, size = 0, count = 8, toy = 0;
  double angle = 0.0;
  bool ply = false;
  std::uint64_t seed = 1;

  auto* pre = app.add_subcommand("preprocess", "Register, window and equalize raw frames");
  pre->add_option("--in", in_dir, "Dataset root with raw/")->required();
  pre->add_option("--out", out_dir, "Output dataset root")->required();
  pre->add_option("--near-mm", near_mm, "Near plane of the depth window");

  auto* lm = app.add_subcommand("landmarks", "Detect landmarks, crop and render FLMs");
  lm->add_option("--in", in_dir, "Dataset root")->required();
  lm->add_option("--backend", backend, "replay or jitter");
  lm->add_option("--config", config_path, "Pipeline config file");

  auto* train = app.add_subcommand("train", "Train generator and discriminators");
  train->add_option("--data", data_dir, "Dataset root")->required();
  train->add_option("--config", config_path, "Pipeline config file");
  train->add_option("--out", out_dir, "Checkpoint directory")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");

  auto* infer = app.add_subcommand("infer", "Synthesize RGBD from FLMs");
  infer->add_option("--ckpt", ckpt, "Checkpoint")->required();
  infer->add_option("--flm", flm, "FLM file or directory")->required();
  infer->add_option("--out", out_dir, "Output directory")->required();
  infer->add_flag("--ply", ply, "Also write point clouds");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on its held-out frames");
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval->add_option("--data", data_dir, "Dataset root")->required();
  eval->add_option("--out", out_dir, "Report directory")->required();

  auto* preview = app.add_subcommand("preview", "Render a turntable view of a PLY file");
  preview->add_option("--ply", ply_path, "Point cloud")->required();
  preview->add_option("--angle", angle, "Rotation in degrees, [0, 360)")->required();
  preview->add_option("--out", out_dir, "Output image")->required();
  preview->add_option("--size", size, "Image size in pixels");

  auto* all = app.add_subcommand("run-all", "Run every stage into a new run directory");
  all->add_option("--data", data_dir, "Dataset root")->required();
  all->add_option("--config", config_path, "Pipeline config file");
  all->add_option("--out", out_dir, "Parent directory for run directories")->required();

  auto* check = app.add_subcommand("preflight", "Validate a dataset before training");
  check->add_option("--data", data_dir, "Dataset root")->required();
  check->add_option("--size", size, "Expected square resolution");

  auto* synth = app.add_subcommand("synth", "Write a synthetic toy dataset");
  synth->add_option("--out", out_dir, "Dataset root")->required();
  synth->add_option("--count", count, "Number of frames");
  synth->add_option("--size", size, "Raw image size");
  synth->add_option("--seed", seed, "Random seed");

  auto* cfg_cmd = app.add_subcommand("config", "Print a configuration file");
  cfg_cmd->add_option("--toy", toy, "Small CPU configuration at this resolution");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitValidation;
  }

  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  if (const char* dev = std::getenv("PIPELINE_DEVICE"); dev && std::string(dev) != "cpu") {
    spdlog::error("PIPELINE_DEVICE={} is not available; only 'cpu' is supported", dev);
    return kExitValidation;
  }
  if (deterministic) cv::setNumThreads(1);

  try {
    if (*pre) {
      facegan::run_preprocess(in_dir, out_dir, near_mm > 0 ? std::optional<int>(near_mm) : std::nullopt);
    } else if (*lm) {
      const auto cfg = load_config(config_path);
      const auto report =
          facegan::run_landmarks(in_dir, cfg, backend.empty() ? cfg.landmarks.backend : backend);
      if (report.written.empty()) {
        spdlog::error("no frames survived landmark detection");
        return kExitValidation;
      }
    } else if (*train) {
      facegan::TrainOptions opt;
      opt.out_dir = out_dir;
      if (!resume.empty()) opt.resume = resume;
      const auto result = facegan::run_training(data_dir, load_config(config_path), opt);
      std::cout << result.checkpoint.string() << "\n";
    } else if (*infer) {
      for (const auto& p : facegan::run_infer(ckpt, flm, out_dir, ply)) std::cout << p.string() << "\n";
    } else if (*eval) {
      std::cout << facegan::run_eval(ckpt, data_dir, out_dir).to_json() << "\n";
    } else if (*preview) {
      facegan::run_preview(ply_path, angle, out_dir, size > 0 ? size : 512);
    } else if (*all) {
      const auto result = facegan::end_to_end(data_dir, load_config(config_path), out_dir);
      std::cout << result.run_dir.string() << "\n" << result.summary.to_json() << "\n";
    } else if (*check) {
      const auto report = facegan::preflight(data_dir, size);
      std::cout << report.summary();
      return report.ok() ? 0 : kExitValidation;
    } else if (*synth) {
      facegan::SyntheticDatasetOptions opt;
      opt.count = count;
      if (size > 0) opt.width = opt.height = size;
      opt.seed = seed;
      facegan::write_synthetic_dataset(out_dir, opt);
    } else if (*cfg_cmd) {
      std::cout << (toy > 0 ? facegan::PipelineConfig::toy(toy) : facegan::PipelineConfig{}).serialize();
    }
  } catch (const facegan::ValidationError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const facegan::ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const facegan::ContractError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return 0;
}
