#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "facegan/config.hpp"
#include "facegan/evaluate.hpp"
#include "facegan/training.hpp"

namespace facegan {

/// Failure inside a named stage of the pipeline.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& cause);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// raw/ -> processed/ plus meta. When `out` differs from `in`, raw/ is copied.
std::vector<FrameId> run_preprocess(const fs::path& in, const fs::path& out,
                                    std::optional<int> near_mm = std::nullopt);

struct LandmarkReport {
  std::vector<FrameId> written;
  std::vector<std::pair<FrameId, std::string>> rejected;
};

/// processed/ -> flm/ crops, FLMs, landmark text and crop rects.
LandmarkReport run_landmarks(const fs::path& root, const PipelineConfig& cfg,
                             const std::string& backend);

std::vector<EvalSample> load_eval_samples(const fs::path& root, const std::vector<FrameId>& ids,
                                          const DepthWindow& window);

/// Evaluates a checkpoint on its held-out frames and writes the report.
EvalSummary run_eval(const fs::path& checkpoint, const fs::path& root, const fs::path& out_dir);

/// Synthesizes every FLM file (or the single file) into out_dir.
std::vector<fs::path> run_infer(const fs::path& checkpoint, const fs::path& flm, const fs::path& out_dir,
                                bool ply);

/// Turntable image of a PLY file.
void run_preview(const fs::path& ply, double angle_deg, const fs::path& out_image, int size = 512);

/// New `run_YYYYmmdd_HHMMSS[_N]` directory under `parent`; never reuses one.
fs::path create_run_dir(const fs::path& parent);

struct EndToEndResult {
  fs::path run_dir;
  fs::path checkpoint;
  EvalSummary summary;
};

/// preprocess -> landmarks (when flm/ is absent) -> train -> infer -> eval -> preview.
EndToEndResult end_to_end(const fs::path& dataset, const PipelineConfig& cfg,
                          const fs::path& runs_parent);

}  // namespace facegan
