#include "facegan/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

#include "facegan/checkpoint.hpp"
#include "facegan/dataset.hpp"
#include "facegan/errors.hpp"
#include "facegan/infer.hpp"
#include "facegan/landmarks.hpp"
#include "facegan/pointcloud.hpp"
#include "facegan/preprocess.hpp"

namespace facegan {

StageError::StageError(std::string stage, const std::string& cause)
    : std::runtime_error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}

std::vector<FrameId> run_preprocess(const fs::path& in, const fs::path& out,
                                    std::optional<int> near_mm) {
  const DatasetLayout src{in}, dst{out};
  if (!fs::is_directory(src.raw())) throw ValidationError("missing " + src.raw().string());
  DatasetMeta meta = fs::exists(src.meta()) ? DatasetMeta::load(src.meta()) : DatasetMeta{};
  if (near_mm) meta.window.near_mm = *near_mm;
  meta.window.validate();
  fs::create_directories(dst.processed());
  if (fs::weakly_canonical(in) != fs::weakly_canonical(out)) {
    fs::create_directories(dst.raw());
    fs::copy(src.raw(), dst.raw(), fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  }
  const auto ids = list_frames(src.raw(), "_color.png");
  if (ids.empty()) throw ValidationError("no raw frames in " + src.raw().string());
  for (FrameId id : ids) {
    RawRgbdFrame raw;
    raw.frame_id = id;
    raw.color = read_image(DatasetLayout::file(src.raw(), id, "_color.png"), CV_8UC3);
    raw.depth = read_image(DatasetLayout::file(src.raw(), id, "_depth16.png"), CV_16UC1);
    if (!meta.calibration) {
      if (raw.color.size() != raw.depth.size()) {
        throw ConfigError("frame " + std::to_string(id) +
                          ": color and depth sizes differ and meta has no calibration");
      }
      meta.calibration = StereoCalibration::identity(raw.color.cols, raw.color.rows);
    }
    const ProcessedFrame p = preprocess_frame(raw, *meta.calibration, meta.window);
    write_image(DatasetLayout::file(dst.processed(), id, "_color.png"), p.frame.color);
    write_image(DatasetLayout::file(dst.processed(), id, "_depth16.png"), p.registered_depth16);
    write_image(DatasetLayout::file(dst.processed(), id, "_depth8.png"), p.frame.depth8);
  }
  meta.save(dst.meta());
  spdlog::info("preprocessed {} frames into {}", ids.size(), dst.processed().string());
  return ids;
}

LandmarkReport run_landmarks(const fs::path& root, const PipelineConfig& cfg,
                             const std::string& backend) {
  const DatasetLayout layout{root};
  const DatasetMeta meta = DatasetMeta::load(layout.meta());
  auto detector = make_detector(backend, layout.raw(), cfg.landmarks);
  fs::create_directories(layout.flm());
  const int size = cfg.landmarks.output_size;
  CropOptions crop_opt;
  crop_opt.square = cfg.landmarks.square_crop;
  crop_opt.margin = cfg.landmarks.crop_margin_px;
  LandmarkReport report;
  for (FrameId id : list_frames(layout.processed(), "_color.png")) {
    RgbdFrame frame;
    frame.window = meta.window;
    frame.color = read_image(DatasetLayout::file(layout.processed(), id, "_color.png"), CV_8UC3);
    frame.depth8 = read_image(DatasetLayout::file(layout.processed(), id, "_depth8.png"), CV_8UC1);
    try {
      const LandmarkSet lms = detect_landmarks(frame.color, id, *detector);
      const CropRect rect = compute_crop(lms, frame.color.cols, frame.color.rows, crop_opt);
      const LandmarkSet local = transform_landmarks(lms, rect, size);
      const cv::Mat flm = render_flm(local, size, cfg.landmarks.flm_radius);
      const RgbdFrame crop = crop_resize(frame, rect, size);
      write_image(DatasetLayout::file(layout.flm(), id, "_color.png"), crop.color);
      write_image(DatasetLayout::file(layout.flm(), id, "_depth8.png"), crop.depth8);
      write_image(DatasetLayout::file(layout.flm(), id, "_flm.png"), flm);
      local.save(DatasetLayout::file(layout.flm(), id, "_lms.txt"));
      std::ofstream(DatasetLayout::file(layout.flm(), id, "_crop.txt")) << rect.to_text();
      report.written.push_back(id);
    } catch (const FrameRejected& e) {
      spdlog::warn("{}", e.what());
      report.rejected.emplace_back(id, e.what());
    } catch (const ContractError& e) {
      spdlog::warn("frame {} rejected: {}", id, e.what());
      report.rejected.emplace_back(id, e.what());
    } catch (const ValidationError& e) {
      spdlog::warn("frame {} rejected: {}", id, e.what());
      report.rejected.emplace_back(id, e.what());
    }
  }
  std::ofstream rejected(layout.flm() / "rejected.txt", std::ios::trunc);
  for (const auto& [id, why] : report.rejected) rejected << id << " " << why << "\n";
  spdlog::info("landmarks: {} frames written, {} rejected", report.written.size(),
               report.rejected.size());
  return report;
}

std::vector<EvalSample> load_eval_samples(const fs::path& root, const std::vector<FrameId>& ids,
                                          const DepthWindow& window) {
  const DatasetLayout layout{root};
  std::vector<EvalSample> samples;
  for (FrameId id : ids) {
    EvalSample s;
    s.id = id;
    s.flm = read_image(DatasetLayout::file(layout.flm(), id, "_flm.png"), CV_8UC1);
    s.truth.window = window;
    s.truth.color = read_image(DatasetLayout::file(layout.flm(), id, "_color.png"), CV_8UC3);
    s.truth.depth8 = read_image(DatasetLayout::file(layout.flm(), id, "_depth8.png"), CV_8UC1);
    samples.push_back(std::move(s));
  }
  return samples;
}

EvalSummary run_eval(const fs::path& checkpoint, const fs::path& root, const fs::path& out_dir) {
  const auto session = InferenceSession::load(checkpoint);
  const PipelineConfig& cfg = session->config();
  const FrameSplit split = read_checkpoint_split(checkpoint);
  for (FrameId id : split.test) {
    if (std::find(split.train.begin(), split.train.end(), id) != split.train.end()) {
      throw ValidationError("frame " + std::to_string(id) + " is in both train and test splits");
    }
  }
  if (split.test.empty()) throw ValidationError("checkpoint has an empty test split");
  const auto samples = load_eval_samples(root, split.test, cfg.window);
  const auto lpips = make_lpips(cfg.lpips);
  EvalOptions opt;
  opt.erosion_radius = cfg.eval.erosion_radius;
  opt.jpeg_equivalence = cfg.eval.jpeg_equivalence;
  EvalOutputs outputs;
  const EvalSummary summary = evaluate_dataset(
      samples, [&](const EvalSample& s) { return session->synthesize(s.flm); }, lpips.get(), opt,
      &outputs);
  write_report(out_dir, summary, samples, outputs, cfg.fusion_camera(), cfg.window);
  spdlog::info("eval: mean SSIM {:.4f}, LPIPS {:.4f} over {} frames", summary.mean_ssim,
               summary.mean_lpips, summary.records.size());
  return summary;
}

std::vector<fs::path> run_infer(const fs::path& checkpoint, const fs::path& flm,
                                const fs::path& out_dir, bool ply) {
  const auto session = InferenceSession::load(checkpoint);
  std::vector<std::pair<std::string, fs::path>> inputs;
  if (fs::is_directory(flm)) {
    for (FrameId id : list_frames(flm, "_flm.png"))
      inputs.emplace_back(std::to_string(id), DatasetLayout::file(flm, id, "_flm.png"));
  } else {
    std::string stem = flm.stem().string();
    if (stem.size() > 4 && stem.ends_with("_flm")) stem.resize(stem.size() - 4);
    inputs.emplace_back(stem, flm);
  }
  if (inputs.empty()) throw ValidationError("no FLM files found at " + flm.string());
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (const auto& [stem, path] : inputs) {
    const RgbdFrame out = session->synthesize(read_image(path, CV_8UC1));
    const fs::path color = out_dir / (stem + "_gen_color.png");
    const fs::path depth = out_dir / (stem + "_gen_depth8.png");
    write_image(color, out.color);
    write_image(depth, out.depth8);
    written.push_back(color);
    written.push_back(depth);
    if (ply) {
      const fs::path p = out_dir / (stem + "_gen.ply");
      export_ply(backproject(out, session->config().fusion_camera(), session->window()), p);
      written.push_back(p);
    }
  }
  spdlog::info("infer: {} frames, mean forward {:.2f} ms", inputs.size(),
               session->mean_latency_ms());
  return written;
}

void run_preview(const fs::path& ply, double angle_deg, const fs::path& out_image, int size) {
  if (!(angle_deg >= 0.0 && angle_deg < 360.0)) {
    throw ValidationError("preview angle must lie in [0, 360)");
  }
  TurntableOptions opt;
  opt.size = size;
  opt.splat = 1;
  write_image(out_image, render_turntable(read_ply(ply), angle_deg, opt));
}

fs::path create_run_dir(const fs::path& parent) {
  fs::create_directories(parent);
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream name;
  name << "run_" << std::put_time(&tm, "%Y%m%d_%H%M%S");
  for (int n = 0;; ++n) {
    const fs::path dir = parent / (n == 0 ? name.str() : name.str() + "_" + std::to_string(n));
    if (fs::create_directory(dir)) return dir;
  }
}

EndToEndResult end_to_end(const fs::path& dataset, const PipelineConfig& cfg,
                          const fs::path& runs_parent) {
  cfg.validate();
  EndToEndResult result;
  result.run_dir = create_run_dir(runs_parent);
  cfg.save(result.run_dir / "config.txt");
  spdlog::info("run directory {}", result.run_dir.string());
  auto stage = [&](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
  };
  const DatasetLayout layout{dataset};
  if (!fs::is_directory(layout.flm()) || list_frames(layout.flm(), "_flm.png").empty()) {
    stage("preprocess", [&] { run_preprocess(dataset, dataset); });
    stage("landmarks", [&] { run_landmarks(dataset, cfg, cfg.landmarks.backend); });
  }
  TrainResult trained;
  stage("train", [&] {
    TrainOptions opt;
    opt.out_dir = result.run_dir / "train";
    trained = run_training(dataset, cfg, opt);
  });
  result.checkpoint = trained.checkpoint;
  stage("infer", [&] {
    const fs::path infer_dir = result.run_dir / "infer";
    fs::create_directories(infer_dir);
    for (FrameId id : trained.split.test) {
      run_infer(trained.checkpoint, DatasetLayout::file(layout.flm(), id, "_flm.png"), infer_dir,
                true);
    }
  });
  stage("eval", [&] { result.summary = run_eval(trained.checkpoint, dataset, result.run_dir / "eval"); });
  stage("preview", [&] {
    const fs::path infer_dir = result.run_dir / "infer";
    fs::create_directories(result.run_dir / "preview");
    for (FrameId id : trained.split.test) {
      const fs::path ply = infer_dir / (std::to_string(id) + "_gen.ply");
      for (int angle : {30, 90}) {
        run_preview(ply, angle,
                    result.run_dir / "preview" / (std::to_string(id) + "_" + std::to_string(angle) + ".png"),
                    cfg.generator.image_size);
      }
    }
  });
  return result;
}

}  // namespace facegan
