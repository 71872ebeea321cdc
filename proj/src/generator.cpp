#include "facegan/generator.hpp"

#include <algorithm>

#include "facegan/errors.hpp"

namespace facegan::nn {
namespace {
constexpr double kDownSlope = 0.2;
}

Generator::Generator(const GeneratorConfig& config) : config_(config) {
  config_.validate();
  const int depth = config_.depth;
  for (int i = 0; i < depth; ++i) {
    const int in = i == 0 ? config_.in_channels : level_width(i - 1);
    down_.emplace_back("generator.down" + std::to_string(i),
                       ConvSpec{in, level_width(i), 4, 2, 1});
  }
  for (int i = 0; i < depth; ++i) {
    const int in = i == depth - 1 ? level_width(i) : 2 * level_width(i);
    const int out = i == 0 ? config_.out_channels : level_width(i - 1);
    up_.emplace_back("generator.up" + std::to_string(i),
                     ConvSpec{in, out, 4, 2, 1});
  }
}

int Generator::level_width(int level) const {
  const int cap = 8 * config_.base_width;
  long long width = config_.base_width;
  for (int i = 0; i < level && width < cap; ++i) width *= 2;
  return static_cast<int>(std::min<long long>(width, cap));
}

bool Generator::has_dropout(int level) const {
  const int innermost = config_.depth - 1;
  return level >= 1 && level < innermost &&
         level >= innermost - config_.dropout_stages &&
         config_.dropout_rate > 0.0;
}

Tensor Generator::forward(const Tensor& x, std::mt19937_64* rng,
                          GeneratorTrace* trace) const {
  const int size = config_.image_size;
  if (x.c() != config_.in_channels || x.h() != size || x.w() != size) {
    throw ContractError("generator expects [N," +
                        std::to_string(config_.in_channels) + "," +
                        std::to_string(size) + "," + std::to_string(size) +
                        "] input, got " + x.shape().str());
  }
  const int depth = config_.depth;
  GeneratorTrace local;
  GeneratorTrace& t = trace ? *trace : local;
  t = GeneratorTrace{};
  t.input = x;
  t.down_inputs.resize(depth);
  t.down_norm.resize(depth);
  t.up_inputs.resize(depth);
  t.up_norm.resize(depth);
  t.dropout_masks.resize(depth);

  // Encoder: skips[i] is the activation entering level i.
  std::vector<Tensor> skips(depth + 1);
  skips[0] = x;
  for (int i = 0; i < depth; ++i) {
    t.down_inputs[i] = i == 0 ? skips[0] : leaky_relu(skips[i], kDownSlope);
    Tensor d = down_[i].forward(t.down_inputs[i]);
    if (i != 0 && i != depth - 1) d = instance_norm(d, t.down_norm[i]);
    skips[i + 1] = std::move(d);
  }

  // Decoder, innermost first.
  Tensor inner = skips[depth];
  for (int i = depth - 1; i >= 0; --i) {
    t.up_inputs[i] = std::move(inner);
    Tensor u = up_[i].forward(leaky_relu(t.up_inputs[i], 0.0));
    if (i == 0) {
      t.output = tanh_forward(u);
      break;
    }
    u = instance_norm(u, t.up_norm[i]);
    if (has_dropout(i) && rng != nullptr) {
      u = dropout(u, config_.dropout_rate, *rng, t.dropout_masks[i]);
    }
    inner = concat_channels(skips[i], u);
  }
  return t.output;
}

Tensor Generator::backward(const GeneratorTrace& t, const Tensor& d_output,
                           Backprop mode) {
  const int depth = config_.depth;
  if (d_output.shape() != t.output.shape()) {
    throw ContractError("generator backward: gradient shape mismatch");
  }
  // d_skips[i]: gradient w.r.t. the activation entering encoder level i.
  std::vector<Tensor> d_skips(depth + 1);
  Tensor g = tanh_backward(t.output, d_output);
  for (int i = 0; i < depth; ++i) {
    const Tensor relu_in = leaky_relu(t.up_inputs[i], 0.0);
    Tensor d_relu = up_[i].backward(relu_in, g, {mode.params, true});
    Tensor d_inner = leaky_relu_backward(t.up_inputs[i], d_relu, 0.0);
    if (i == depth - 1) {
      d_skips[depth] = std::move(d_inner);
      break;
    }
    // up_inputs[i] = concat(skip[i + 1], decoder output of level i + 1)
    Tensor d_skip, d_up;
    split_channels(d_inner, level_width(i), d_skip, d_up);
    d_skips[i + 1] = std::move(d_skip);
    const int next = i + 1;
    if (!t.dropout_masks[next].empty()) {
      d_up = dropout_backward(t.dropout_masks[next], d_up);
    }
    g = instance_norm_backward(t.up_norm[next], d_up);
  }

  for (int i = depth - 1; i >= 0; --i) {
    Tensor d = d_skips[i + 1];
    if (i != 0 && i != depth - 1) d = instance_norm_backward(t.down_norm[i], d);
    const bool need_input = i > 0 || mode.input;
    Tensor d_in = down_[i].backward(t.down_inputs[i], d, {mode.params, need_input});
    if (i == 0) return d_in;
    // down_inputs[i] = leaky_relu(skip[i]) has the same sign as skip[i].
    d_in = leaky_relu_backward(t.down_inputs[i], d_in, kDownSlope);
    d_skips[i] += d_in;
  }
  return {};
}

std::vector<Parameter*> Generator::parameters() {
  std::vector<Parameter*> params;
  for (auto& c : down_) {
    params.push_back(&c.weight);
    params.push_back(&c.bias);
  }
  for (auto& c : up_) {
    params.push_back(&c.weight);
    params.push_back(&c.bias);
  }
  return params;
}

std::vector<const Parameter*> Generator::parameters() const {
  std::vector<const Parameter*> params;
  for (const auto& c : down_) {
    params.push_back(&c.weight);
    params.push_back(&c.bias);
  }
  for (const auto& c : up_) {
    params.push_back(&c.weight);
    params.push_back(&c.bias);
  }
  return params;
}

void Generator::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0);
}

}  // namespace facegan::nn
