#include "facegan/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include "facegan/errors.hpp"

namespace facegan {
namespace {

template <class Config, class Visitor>
void visit_fields(Config& c, Visitor&& v) {
  v("generator.in_channels", c.generator.in_channels);
  v("generator.out_channels", c.generator.out_channels);
  v("generator.image_size", c.generator.image_size);
  v("generator.base_width", c.generator.base_width);
  v("generator.depth", c.generator.depth);
  v("generator.dropout_stages", c.generator.dropout_stages);
  v("generator.dropout_rate", c.generator.dropout_rate);
  v("discriminator.in_channels", c.discriminator.in_channels);
  v("discriminator.num_scales", c.discriminator.num_scales);
  v("discriminator.layers_per_scale", c.discriminator.layers_per_scale);
  v("discriminator.base_width", c.discriminator.base_width);
  v("loss.lambda_fm", c.loss.lambda_fm);
  v("loss.lambda_l1", c.loss.lambda_l1);
  v("loss.lambda_lpips", c.loss.lambda_lpips);
  v("train.epochs", c.train.epochs);
  v("train.batch_size", c.train.batch_size);
  v("train.lr_initial", c.train.lr_initial);
  v("train.lr_constant_epochs", c.train.lr_constant_epochs);
  v("train.lr_decay_epochs", c.train.lr_decay_epochs);
  v("train.seed", c.train.seed);
  v("train.init_stddev", c.train.init_stddev);
  v("train.split_train_fraction", c.train.split_train_fraction);
  v("train.discriminator_loss_factor", c.train.discriminator_loss_factor);
  v("train.adam_beta1", c.train.adam_beta1);
  v("train.adam_beta2", c.train.adam_beta2);
  v("train.checkpoint_every", c.train.checkpoint_every);
  v("train.keep_last", c.train.keep_last);
  v("window.near_mm", c.window.near_mm);
  v("window.span_mm", c.window.span_mm);
  v("lpips.weights_path", c.lpips.weights_path);
  v("lpips.seed", c.lpips.seed);
  v("landmarks.backend", c.landmarks.backend);
  v("landmarks.flm_radius", c.landmarks.flm_radius);
  v("landmarks.square_crop", c.landmarks.square_crop);
  v("landmarks.crop_margin_px", c.landmarks.crop_margin_px);
  v("landmarks.output_size", c.landmarks.output_size);
  v("landmarks.jitter_px", c.landmarks.jitter_px);
  v("landmarks.jitter_seed", c.landmarks.jitter_seed);
  v("eval.erosion_radius", c.eval.erosion_radius);
  v("eval.jpeg_equivalence", c.eval.jpeg_equivalence);
  v("camera.fx", c.camera.fx);
  v("camera.fy", c.camera.fy);
  v("camera.cx", c.camera.cx);
  v("camera.cy", c.camera.cy);
  v("camera.width", c.camera.width);
  v("camera.height", c.camera.height);
}

std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }
std::string format_value(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

template <class T>
void parse_number(const std::string& key, const std::string& text, T& out) {
  T value{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  out = value;
}

void parse_value(const std::string& key, const std::string& text, int& out) {
  parse_number(key, text, out);
}
void parse_value(const std::string& key, const std::string& text,
                 std::uint64_t& out) {
  parse_number(key, text, out);
}
void parse_value(const std::string& key, const std::string& text,
                 double& out) {
  parse_number(key, text, out);
}
void parse_value(const std::string& key, const std::string& text, bool& out) {
  if (text == "true") {
    out = true;
  } else if (text == "false") {
    out = false;
  } else {
    throw ConfigError("config key '" + key + "': expected true/false");
  }
}
void parse_value(const std::string&, const std::string& text,
                 std::string& out) {
  out = text;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

void DepthWindow::validate() const {
  if (span_mm != 255) throw ConfigError("depth window span must be 255 mm");
  if (near_mm <= 0) throw ConfigError("depth window near plane must be > 0");
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ConfigError("camera focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw ConfigError("camera dimensions must be positive");
  }
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throw ConfigError("camera principal point outside the image");
  }
}

CameraIntrinsics CameraIntrinsics::synthetic(int width, int height) {
  // ~53 degree horizontal field of view.
  const double f = static_cast<double>(width);
  return {f, f, width / 2.0, height / 2.0, width, height};
}

void GeneratorConfig::validate() const {
  if (in_channels != 1) throw ConfigError("generator.in_channels must be 1");
  if (out_channels != 4) throw ConfigError("generator.out_channels must be 4");
  if (depth < 2) throw ConfigError("generator.depth must be >= 2");
  if (base_width <= 0) throw ConfigError("generator.base_width must be > 0");
  if (image_size <= 0 || image_size % (1 << depth) != 0) {
    throw ConfigError("generator.image_size must be divisible by 2^depth");
  }
  if (dropout_stages < 0) {
    throw ConfigError("generator.dropout_stages must be >= 0");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("generator.dropout_rate must lie in [0, 1)");
  }
}

void DiscriminatorConfig::validate() const {
  if (in_channels != 5) {
    throw ConfigError("discriminator.in_channels must be 5");
  }
  if (num_scales != 3) throw ConfigError("discriminator.num_scales must be 3");
  if (layers_per_scale < 1) {
    throw ConfigError("discriminator.layers_per_scale must be >= 1");
  }
  if (base_width <= 0) {
    throw ConfigError("discriminator.base_width must be > 0");
  }
}

void LossWeights::validate() const {
  if (lambda_fm < 0.0 || lambda_l1 < 0.0 || lambda_lpips < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size != 1) throw ConfigError("train.batch_size must be 1");
  if (lr_constant_epochs < 0 || lr_decay_epochs < 0 ||
      lr_constant_epochs + lr_decay_epochs != epochs) {
    throw ConfigError(
        "train.lr_constant_epochs + train.lr_decay_epochs must equal "
        "train.epochs");
  }
  if (!(split_train_fraction > 0.0 && split_train_fraction < 1.0)) {
    throw ConfigError("train.split_train_fraction must lie in (0, 1)");
  }
  if (lr_initial < 0.0) throw ConfigError("train.lr_initial must be >= 0");
  if (!(init_stddev > 0.0)) throw ConfigError("train.init_stddev must be > 0");
  if (checkpoint_every <= 0 || keep_last <= 0) {
    throw ConfigError("checkpoint cadence and retention must be positive");
  }
}

void PipelineConfig::validate() const {
  generator.validate();
  discriminator.validate();
  loss.validate();
  train.validate();
  window.validate();
  if (landmarks.flm_radius < 0) {
    throw ConfigError("landmarks.flm_radius must be >= 0");
  }
  if (landmarks.output_size <= 0) {
    throw ConfigError("landmarks.output_size must be > 0");
  }
  if (landmarks.crop_margin_px < 0 || landmarks.jitter_px < 0) {
    throw ConfigError("landmarks.crop_margin_px and landmarks.jitter_px must be >= 0");
  }
  if (eval.erosion_radius < 0) {
    throw ConfigError("eval.erosion_radius must be >= 0");
  }
  if (camera.fx != 0.0) camera.validate();
}

CameraIntrinsics PipelineConfig::fusion_camera() const {
  if (camera.fx != 0.0) return camera;
  return CameraIntrinsics::synthetic(generator.image_size,
                                     generator.image_size);
}

std::string PipelineConfig::serialize() const {
  std::ostringstream out;
  out << "# facegan pipeline configuration\n";
  visit_fields(*this, [&](const char* key, const auto& value) {
    out << key << " = " << format_value(value) << "\n";
  });
  return out.str();
}

PipelineConfig PipelineConfig::parse(const std::string& text) {
  PipelineConfig cfg;
  std::map<std::string, std::string> entries;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    entries[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  visit_fields(cfg, [&](const char* key, auto& value) {
    auto it = entries.find(key);
    if (it == entries.end()) return;
    parse_value(key, it->second, value);
    entries.erase(it);
  });
  if (!entries.empty()) {
    throw ConfigError("unknown config key '" + entries.begin()->first + "'");
  }
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

void PipelineConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << serialize();
}

PipelineConfig PipelineConfig::toy(int image_size) {
  PipelineConfig cfg;
  cfg.generator.image_size = image_size;
  cfg.generator.base_width = 16;
  int depth = 0;
  while ((image_size >> (depth + 1)) >= 1 && depth < 8 &&
         image_size % (1 << (depth + 1)) == 0) {
    ++depth;
  }
  cfg.generator.depth = depth;
  cfg.discriminator.base_width = 16;
  cfg.landmarks.output_size = image_size;
  return cfg;
}

}  // namespace facegan
