#include "fred/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "fred/errors.hpp"

namespace fred {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ")";
}

Tensor4::Tensor4(Shape4 shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

Tensor4::Tensor4(Shape4 shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

bool Tensor4::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor4::squared_norm() const noexcept {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

Tensor4 Tensor4::gather(std::span<const std::size_t> indices) const {
  Shape4 s = shape_;
  s.n = indices.size();
  Tensor4 out(s);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= shape_.n) throw ShapeError("gather index out of range");
    auto src = instance(indices[i]);
    std::copy(src.begin(), src.end(), out.instance(i).begin());
  }
  return out;
}

BinaryMask::BinaryMask(std::size_t h, std::size_t w, bool fill)
    : h_(h), w_(w), bits_(h * w, fill ? 1 : 0) {}

BinaryMask BinaryMask::from_indices(std::size_t h, std::size_t w,
                                    std::span<const std::uint32_t> ones) {
  BinaryMask m(h, w);
  for (auto i : ones) {
    if (i >= h * w) throw ShapeError("mask index out of range");
    m.bits_[i] = 1;
  }
  return m;
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<std::uint32_t> BinaryMask::indices() const {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (bits_[i]) out.push_back(static_cast<std::uint32_t>(i));
  return out;
}

}  // namespace fred
