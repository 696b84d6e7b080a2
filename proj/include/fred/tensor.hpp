#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fred {

struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t plane() const noexcept { return h * w; }
  std::size_t instance() const noexcept { return c * h * w; }
  std::size_t size() const noexcept { return n * c * h * w; }

  bool operator==(const Shape4&) const = default;

  std::string str() const;
};

/// Dense real (N, C, H, W) array in row-major order.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, double fill = 0.0);
  /// Throws ShapeError when data.size() does not match the shape.
  Tensor4(Shape4 shape, std::vector<double> data);

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }

  double& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  double operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  std::span<double> plane(std::size_t n, std::size_t c) {
    return std::span<double>(data_).subspan((n * shape_.c + c) * shape_.plane(), shape_.plane());
  }
  std::span<const double> plane(std::size_t n, std::size_t c) const {
    return std::span<const double>(data_).subspan((n * shape_.c + c) * shape_.plane(),
                                                  shape_.plane());
  }
  std::span<double> instance(std::size_t n) {
    return std::span<double>(data_).subspan(n * shape_.instance(), shape_.instance());
  }
  std::span<const double> instance(std::size_t n) const {
    return std::span<const double>(data_).subspan(n * shape_.instance(), shape_.instance());
  }

  bool all_finite() const noexcept;
  double squared_norm() const noexcept;

  /// Copies the listed instances, in order, into a new tensor.
  Tensor4 gather(std::span<const std::size_t> indices) const;

  bool operator==(const Tensor4&) const = default;

 private:
  Shape4 shape_{};
  std::vector<double> data_;
};

/// Binary (H, W) selection map.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w, bool fill = false);
  /// Mask with ones at the flat indices u * W + v listed in `ones`.
  static BinaryMask from_indices(std::size_t h, std::size_t w,
                                 std::span<const std::uint32_t> ones);

  std::size_t h() const noexcept { return h_; }
  std::size_t w() const noexcept { return w_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool operator()(std::size_t u, std::size_t v) const { return bits_[u * w_ + v] != 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool on) { bits_[i] = on ? 1 : 0; }

  std::size_t count() const noexcept;
  /// Sorted flat indices of the ones.
  std::vector<std::uint32_t> indices() const;

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace fred
