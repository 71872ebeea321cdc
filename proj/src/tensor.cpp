#include "facegan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "facegan/errors.hpp"

namespace facegan::nn {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ContractError("negative tensor dimension " + shape.str());
  }
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(shape), data_(values.begin(), values.end()) {
  if (data_.size() != shape.numel()) {
    throw ContractError("tensor value count does not match shape " +
                        shape.str());
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw ContractError("shape mismatch in +=: " + shape_.str() + " vs " +
                        other.shape_.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ContractError("concat_channels: incompatible shapes " +
                        a.shape().str() + " and " + b.shape().str());
  }
  Tensor out({a.n(), a.c() + b.c(), a.h(), a.w()});
  const std::size_t plane = a.shape().plane();
  for (int n = 0; n < a.n(); ++n) {
    std::memcpy(out.plane(n, 0), a.plane(n, 0),
                sizeof(double) * plane * a.c());
    std::memcpy(out.plane(n, a.c()), b.plane(n, 0),
                sizeof(double) * plane * b.c());
  }
  return out;
}

void split_channels(const Tensor& x, int channels, Tensor& head,
                    Tensor& tail) {
  if (channels < 0 || channels > x.c()) {
    throw ContractError("split_channels: bad split point");
  }
  head = slice_channels(x, 0, channels);
  tail = slice_channels(x, channels, x.c() - channels);
}

Tensor slice_channels(const Tensor& x, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > x.c()) {
    throw ContractError("slice_channels: range out of bounds");
  }
  Tensor out({x.n(), count, x.h(), x.w()});
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    if (count > 0) {
      std::memcpy(out.plane(n, 0), x.plane(n, begin),
                  sizeof(double) * plane * count);
    }
  }
  return out;
}

Tensor slice_batch(const Tensor& x, int index) {
  if (index < 0 || index >= x.n()) {
    throw ContractError("slice_batch: index out of range");
  }
  Tensor out({1, x.c(), x.h(), x.w()});
  std::memcpy(out.data(), x.plane(index, 0),
              sizeof(double) * out.size());
  return out;
}

}  // namespace facegan::nn
