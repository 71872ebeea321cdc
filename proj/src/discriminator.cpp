#include "facegan/discriminator.hpp"

#include <algorithm>

#include "facegan/errors.hpp"

namespace facegan::nn {
namespace {

constexpr double kSlope = 0.2;
constexpr int kKernel = 4;
constexpr int kPadding = 2;

std::vector<ConvSpec> block_specs(const DiscriminatorConfig& config) {
  std::vector<ConvSpec> specs;
  const int cap = 8 * config.base_width;
  int width = config.base_width;
  specs.push_back({config.in_channels, width, kKernel, 2, kPadding});
  for (int n = 1; n < config.layers_per_scale; ++n) {
    const int next = std::min(width * 2, cap);
    specs.push_back({width, next, kKernel, 2, kPadding});
    width = next;
  }
  const int next = std::min(width * 2, cap);
  specs.push_back({width, next, kKernel, 1, kPadding});
  specs.push_back({next, 1, kKernel, 1, kPadding});
  return specs;
}

}  // namespace

std::vector<Shape> patch_discriminator_shapes(const DiscriminatorConfig& config,
                                              const Shape& input) {
  std::vector<Shape> shapes;
  Shape s = input;
  for (const ConvSpec& spec : block_specs(config)) {
    s = {s.n, spec.out_channels,
         conv_output_size(s.h, spec.kernel, spec.stride, spec.padding),
         conv_output_size(s.w, spec.kernel, spec.stride, spec.padding)};
    shapes.push_back(s);
  }
  return shapes;
}

PatchDiscriminator::PatchDiscriminator(const DiscriminatorConfig& config,
                                       const std::string& name) {
  int i = 0;
  for (const ConvSpec& spec : block_specs(config)) {
    convs_.emplace_back(name + ".conv" + std::to_string(i++), spec);
  }
}

void PatchDiscriminator::forward(const Tensor& x, PatchTrace& t) const {
  const std::size_t blocks = convs_.size();
  t = PatchTrace{};
  t.conv_inputs.resize(blocks);
  t.norms.resize(blocks);
  t.pre_activations.resize(blocks);
  t.features.resize(blocks);
  Tensor h = x;
  for (std::size_t b = 0; b < blocks; ++b) {
    t.conv_inputs[b] = h;
    Tensor y = convs_[b].forward(h);
    if (b + 1 == blocks) {
      t.features[b] = std::move(y);
      break;
    }
    if (b != 0) y = instance_norm(y, t.norms[b]);
    t.pre_activations[b] = y;
    h = leaky_relu(y, kSlope);
    t.features[b] = h;
  }
}

Tensor PatchDiscriminator::backward(const PatchTrace& t,
                                    const std::vector<Tensor>& d_features,
                                    Backprop mode) {
  const std::size_t blocks = convs_.size();
  if (d_features.size() != blocks) {
    throw ContractError("patch discriminator backward: expected " +
                        std::to_string(blocks) + " feature gradients");
  }
  Tensor g;
  for (std::size_t idx = blocks; idx-- > 0;) {
    // g: gradient w.r.t. features[idx] flowing from deeper blocks.
    const Tensor& extra = d_features[idx];
    if (!extra.empty()) {
      if (g.empty()) {
        g = extra;
      } else {
        g += extra;
      }
    }
    if (g.empty()) g = Tensor(t.features[idx].shape());
    if (idx + 1 != blocks) {
      g = leaky_relu_backward(t.pre_activations[idx], g, kSlope);
      if (idx != 0) g = instance_norm_backward(t.norms[idx], g);
    }
    const bool need_input = idx > 0 || mode.input;
    g = convs_[idx].backward(t.conv_inputs[idx], g, {mode.params, need_input});
  }
  return g;
}

std::vector<Parameter*> PatchDiscriminator::parameters() {
  std::vector<Parameter*> params;
  for (auto& c : convs_) {
    params.push_back(&c.weight);
    params.push_back(&c.bias);
  }
  return params;
}

std::vector<const Parameter*> PatchDiscriminator::parameters() const {
  std::vector<const Parameter*> params;
  for (const auto& c : convs_) {
    params.push_back(&c.weight);
    params.push_back(&c.bias);
  }
  return params;
}

MultiScaleDiscriminator::MultiScaleDiscriminator(const DiscriminatorConfig& config)
    : config_(config) {
  config_.validate();
  for (int k = 0; k < config_.num_scales; ++k) {
    scales_.emplace_back(config_, "discriminator.d" + std::to_string(k + 1));
  }
}

PatchResponse MultiScaleDiscriminator::forward(const Tensor& rgbd,
                                               const Tensor& flm) const {
  if (rgbd.c() != 4 || flm.c() != 1 || rgbd.n() != flm.n() ||
      rgbd.h() != flm.h() || rgbd.w() != flm.w()) {
    throw ContractError("discriminator expects aligned 4-channel RGBD and "
                        "1-channel landmark map, got " +
                        rgbd.shape().str() + " and " + flm.shape().str());
  }
  PatchResponse response;
  response.scales.resize(scales_.size());
  Tensor x = concat_channels(rgbd, flm);
  for (std::size_t k = 0; k < scales_.size(); ++k) {
    if (k > 0) x = avg_pool2(x);
    response.scale_inputs.push_back(x.shape());
    scales_[k].forward(x, response.scales[k]);
  }
  return response;
}

Tensor MultiScaleDiscriminator::backward(
    const PatchResponse& response,
    const std::vector<std::vector<Tensor>>& d_features, Backprop mode) {
  if (d_features.size() != scales_.size()) {
    throw ContractError("discriminator backward: one gradient set per scale");
  }
  Tensor carry;  // gradient w.r.t. the input of scale k + 1
  for (std::size_t k = scales_.size(); k-- > 0;) {
    Tensor g = scales_[k].backward(response.scales[k], d_features[k], mode);
    if (!mode.input) continue;
    if (!carry.empty()) g += avg_pool2_backward(response.scale_inputs[k], carry);
    carry = std::move(g);
  }
  if (!mode.input) return {};
  return slice_channels(carry, 0, 4);
}

std::vector<Parameter*> MultiScaleDiscriminator::parameters() {
  std::vector<Parameter*> params;
  for (auto& s : scales_) {
    auto p = s.parameters();
    params.insert(params.end(), p.begin(), p.end());
  }
  return params;
}

std::vector<const Parameter*> MultiScaleDiscriminator::parameters() const {
  std::vector<const Parameter*> params;
  for (const auto& s : scales_) {
    auto p = s.parameters();
    params.insert(params.end(), p.begin(), p.end());
  }
  return params;
}

void MultiScaleDiscriminator::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0);
}

}  // namespace facegan::nn
