#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fred/tensor.hpp"

namespace fred::net {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// ConvNet of `depth` blocks: 3x3 conv (no bias), instance norm, ReLU, 2x2 average pool.
/// A linear head maps the flattened final pool to class logits.
struct NetSpec {
  int depth = 3;
  int width = 32;  // filters per conv
  std::size_t in_channels = 1;
  std::size_t in_height = 28;
  std::size_t in_width = 28;
  int classes = 10;

  std::size_t feature_dim() const;
  /// Throws ShapeError when a dimension is zero or the pools shrink the map below 1x1.
  void validate() const;
  static NetSpec for_images(const Shape4& shape, int classes, int depth = 3, int width = 32);

  bool operator==(const NetSpec&) const = default;
};

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Flat parameter storage. Conv l is laid out [out][in][3][3]; the head
/// weight is [classes][feature_dim], followed by the head bias.
struct NetParams {
  NetSpec spec;
  std::vector<double> values;
  std::vector<ParamBlock> layout;

  std::span<const double> block(std::size_t i) const {
    return std::span(values).subspan(layout[i].offset, layout[i].size);
  }
  std::span<double> block(std::size_t i) { return std::span(values).subspan(layout[i].offset, layout[i].size); }
  std::size_t head_weight_block() const noexcept { return std::size_t(spec.depth); }
  std::size_t head_bias_block() const noexcept { return std::size_t(spec.depth) + 1; }
};

/// All-zero parameters with the layout filled in.
NetParams zero_params(const NetSpec& spec);
/// He-normal conv weights (variance 2 / fan_in), LeCun-normal head weights, zero head bias.
NetParams init_params(const NetSpec& spec, std::uint64_t seed);

/// Flattened final-pool features, one row per instance.
Matrix embed(const NetParams& params, const Tensor4& x);

/// Gradient w.r.t. x of sum(upstream .* embed(x)).
Tensor4 embed_vjp(const NetParams& params, const Tensor4& x, const Matrix& upstream);

struct ClassifyResult {
  double loss = 0.0;                // mean cross-entropy
  std::vector<double> grads;        // same layout as NetParams::values
  Matrix probabilities;             // softmax, one row per instance
};

ClassifyResult classify_forward_backward(const NetParams& params, const Tensor4& x,
                                         std::span<const int> labels);

Matrix logits(const NetParams& params, const Tensor4& x);
std::vector<int> predict(const NetParams& params, const Tensor4& x);

}  // namespace fred::net
