#include "facegan/lpips.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "facegan/errors.hpp"

namespace facegan {
namespace {

constexpr double kNormEps = 1e-10;
constexpr char kMagic[8] = {'F', 'G', 'L', 'P', 'I', 'P', 'S', '1'};

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated perceptual weight file");
  return v;
}

void read_doubles(std::istream& in, double* dst, std::size_t count) {
  in.read(reinterpret_cast<char*>(dst),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw IoError("truncated perceptual weight file");
}

// Unit-normalize each pixel's channel vector.
nn::Tensor normalize_channels(const nn::Tensor& f, std::vector<double>& norms) {
  nn::Tensor out(f.shape());
  const std::size_t plane = f.shape().plane();
  norms.assign(plane, 0.0);
  for (std::size_t p = 0; p < plane; ++p) {
    double s = 0.0;
    for (int c = 0; c < f.c(); ++c) {
      const double v = f.plane(0, c)[p];
      s += v * v;
    }
    norms[p] = std::sqrt(s);
    const double inv = 1.0 / (norms[p] + kNormEps);
    for (int c = 0; c < f.c(); ++c) out.plane(0, c)[p] = f.plane(0, c)[p] * inv;
  }
  return out;
}

}  // namespace

LpipsNetwork LpipsNetwork::random_features(std::uint64_t seed) {
  LpipsNetwork net;
  net.shift_ = {-0.030, -0.088, -0.188};
  net.scale_ = {0.458, 0.448, 0.450};
  const nn::ConvSpec specs[] = {
      {3, 16, 3, 1, 1}, {16, 32, 3, 2, 1}, {32, 32, 3, 2, 1}};
  std::mt19937_64 rng(seed);
  int index = 0;
  for (const auto& spec : specs) {
    Layer layer{nn::Conv2d("lpips.conv" + std::to_string(index++), spec), 0.2,
                std::vector<double>(spec.out_channels,
                                    1.0 / spec.out_channels)};
    const double fan_in = spec.in_channels * spec.kernel * spec.kernel;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (double& w : layer.conv.weight.value.values()) w = dist(rng);
    for (double& b : layer.conv.bias.value.values()) b = 0.1 * dist(rng);
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

LpipsNetwork LpipsNetwork::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open perceptual weights " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError("not a perceptual weight file: " + path.string());
  }
  LpipsNetwork net;
  for (double& v : net.shift_) v = read_pod<double>(in);
  for (double& v : net.scale_) v = read_pod<double>(in);
  const auto count = read_pod<std::uint32_t>(in);
  int expected_in = 3;
  for (std::uint32_t i = 0; i < count; ++i) {
    nn::ConvSpec spec;
    spec.in_channels = read_pod<std::int32_t>(in);
    spec.out_channels = read_pod<std::int32_t>(in);
    spec.kernel = read_pod<std::int32_t>(in);
    spec.stride = read_pod<std::int32_t>(in);
    spec.padding = read_pod<std::int32_t>(in);
    if (spec.in_channels != expected_in) {
      throw IoError("perceptual weight file: layer channel chain broken");
    }
    expected_in = spec.out_channels;
    Layer layer{nn::Conv2d("lpips.conv" + std::to_string(i), spec),
                read_pod<double>(in), std::vector<double>(spec.out_channels)};
    read_doubles(in, layer.conv.weight.value.data(), layer.conv.weight.value.size());
    read_doubles(in, layer.conv.bias.value.data(), layer.conv.bias.value.size());
    read_doubles(in, layer.linear.data(), layer.linear.size());
    for (double w : layer.linear) {
      if (w < 0.0) throw IoError("perceptual channel weights must be >= 0");
    }
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

void LpipsNetwork::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write perceptual weights " + path.string());
  out.write(kMagic, 8);
  for (double v : shift_) write_pod(out, v);
  for (double v : scale_) write_pod(out, v);
  write_pod(out, static_cast<std::uint32_t>(layers_.size()));
  for (const Layer& layer : layers_) {
    const nn::ConvSpec& s = layer.conv.spec;
    for (int v : {s.in_channels, s.out_channels, s.kernel, s.stride, s.padding}) {
      write_pod(out, static_cast<std::int32_t>(v));
    }
    write_pod(out, layer.slope);
    out.write(reinterpret_cast<const char*>(layer.conv.weight.value.data()),
              static_cast<std::streamsize>(layer.conv.weight.value.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(layer.conv.bias.value.data()),
              static_cast<std::streamsize>(layer.conv.bias.value.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(layer.linear.data()),
              static_cast<std::streamsize>(layer.linear.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing perceptual weights " + path.string());
}

void LpipsNetwork::check_input(const nn::Tensor& x) const {
  if (x.n() != 1 || x.c() != 3) {
    throw ContractError("perceptual distance expects [1,3,H,W], got " +
                        x.shape().str());
  }
}

LpipsNetwork::Features LpipsNetwork::extract(const nn::Tensor& x) const {
  check_input(x);
  Features f;
  nn::Tensor h(x.shape());
  for (int c = 0; c < 3; ++c) {
    const double* src = x.plane(0, c);
    double* dst = h.plane(0, c);
    for (std::size_t i = 0; i < x.shape().plane(); ++i) {
      dst[i] = (src[i] - shift_[c]) / scale_[c];
    }
  }
  for (const Layer& layer : layers_) {
    f.inputs.push_back(h);
    nn::Tensor pre = layer.conv.forward(h);
    h = nn::leaky_relu(pre, layer.slope);
    f.pre.push_back(std::move(pre));
    f.features.push_back(h);
  }
  return f;
}

double LpipsNetwork::distance(const nn::Tensor& a, const nn::Tensor& b) const {
  if (a.shape() != b.shape()) {
    throw ContractError("perceptual distance: shape mismatch");
  }
  const Features fa = extract(a);
  const Features fb = extract(b);
  double total = 0.0;
  std::vector<double> na, nb;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const nn::Tensor ha = normalize_channels(fa.features[l], na);
    const nn::Tensor hb = normalize_channels(fb.features[l], nb);
    const std::size_t plane = ha.shape().plane();
    double sum = 0.0;
    for (int c = 0; c < ha.c(); ++c) {
      const double w = layers_[l].linear[c];
      const double* pa = ha.plane(0, c);
      const double* pb = hb.plane(0, c);
      double s = 0.0;
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = pa[p] - pb[p];
        s += d * d;
      }
      sum += w * s;
    }
    total += sum / static_cast<double>(plane);
  }
  return total;
}

double LpipsNetwork::distance_with_grad(const nn::Tensor& a, const nn::Tensor& b,
                                        nn::Tensor& d_b) const {
  if (a.shape() != b.shape()) {
    throw ContractError("perceptual distance: shape mismatch");
  }
  const Features fa = extract(a);
  const Features fb = extract(b);
  double total = 0.0;
  std::vector<nn::Tensor> d_features(layers_.size());
  std::vector<double> na, nb;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const nn::Tensor ha = normalize_channels(fa.features[l], na);
    const nn::Tensor hb = normalize_channels(fb.features[l], nb);
    const nn::Tensor& raw = fb.features[l];
    const std::size_t plane = ha.shape().plane();
    const double inv_plane = 1.0 / static_cast<double>(plane);
    double sum = 0.0;
    nn::Tensor d_hat(hb.shape());
    for (int c = 0; c < ha.c(); ++c) {
      const double w = layers_[l].linear[c];
      const double* pa = ha.plane(0, c);
      const double* pb = hb.plane(0, c);
      double* g = d_hat.plane(0, c);
      double s = 0.0;
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = pa[p] - pb[p];
        s += d * d;
        g[p] = -2.0 * w * d * inv_plane;
      }
      sum += w * s;
    }
    total += sum / static_cast<double>(plane);
    // Back through f / (|f| + eps).
    nn::Tensor d_raw(raw.shape());
    for (std::size_t p = 0; p < plane; ++p) {
      const double n = nb[p];
      const double denom = n + kNormEps;
      double dot = 0.0;
      for (int c = 0; c < raw.c(); ++c) dot += d_hat.plane(0, c)[p] * raw.plane(0, c)[p];
      const double radial = n > 0.0 ? dot / (n * denom * denom) : 0.0;
      for (int c = 0; c < raw.c(); ++c) {
        d_raw.plane(0, c)[p] =
            d_hat.plane(0, c)[p] / denom - raw.plane(0, c)[p] * radial;
      }
    }
    d_features[l] = std::move(d_raw);
  }
  nn::Tensor g;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (g.empty()) {
      g = d_features[l];
    } else {
      g += d_features[l];
    }
    g = nn::leaky_relu_backward(fb.pre[l], g, layers_[l].slope);
    g = layers_[l].conv.backward_input(fb.inputs[l], g);
  }
  d_b = nn::Tensor(b.shape());
  for (int c = 0; c < 3; ++c) {
    const double* src = g.plane(0, c);
    double* dst = d_b.plane(0, c);
    for (std::size_t i = 0; i < b.shape().plane(); ++i) dst[i] = src[i] / scale_[c];
  }
  return total;
}

}  // namespace facegan
