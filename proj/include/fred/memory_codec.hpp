#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fred/frequency.hpp"
#include "fred/spectral_stats.hpp"
#include "fred/tensor.hpp"

namespace fred::codec {

struct BudgetSpec {
  std::size_t ipc = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t k = 0;  // kept dims per channel
  freq::TransformKind transform{};
  std::size_t decoded_per_class = 0;

  std::size_t spatial_dim() const noexcept { return height * width; }
  /// Scalars charged per kept dim: 2 for the complex-valued DFT, else 1.
  std::size_t coefficient_cost() const noexcept;
  /// Budgeted scalars per class actually used by the memory.
  std::size_t stored_scalars_per_class() const noexcept;
  /// The cap: ipc full-resolution images.
  std::size_t budget_scalars_per_class() const noexcept { return ipc * channels * spatial_dim(); }
  /// d / (cost * k), the increment before flooring to whole instances.
  double nominal_increment() const noexcept;
  /// decoded_per_class / ipc.
  double increment() const noexcept;

  bool operator==(const BudgetSpec&) const = default;
};

/// decoded_per_class = floor(ipc * d / (cost * k)).
/// Throws InvalidBudget for zero arguments, k > H*W, or an empty result.
BudgetSpec plan_budget(std::size_t ipc, std::size_t height, std::size_t width, std::size_t channels,
                       std::size_t k, freq::TransformKind transform);

/// Learnable frequency coefficients with fixed labels.
///
/// Instances are stored class-major. Row i holds channels * k values,
/// channel-major, in the order of its class index list.
struct SyntheticMemory {
  BudgetSpec budget;
  stats::MaskSet masks;
  std::vector<double> coefficients;
  std::vector<int> labels;
  std::uint32_t seed = 0;

  std::size_t classes() const noexcept { return masks.classes(); }
  std::size_t instances() const noexcept { return labels.size(); }
  std::size_t row_size() const noexcept { return budget.channels * budget.k; }
  std::span<double> row(std::size_t i) { return std::span(coefficients).subspan(i * row_size(), row_size()); }
  std::span<const double> row(std::size_t i) const {
    return std::span(coefficients).subspan(i * row_size(), row_size());
  }

  /// Throws CorruptMemory on any inconsistency between budget, masks, labels and values.
  void validate() const;
  /// Copy with every coefficient rounded to f32, as stored on disk.
  SyntheticMemory quantized() const;

  bool operator==(const SyntheticMemory& o) const;
};

/// Memory with zero coefficients and class-major labels.
SyntheticMemory empty_memory(const stats::MaskSet& masks, const BudgetSpec& budget, std::uint32_t seed);

/// Seeds every class with masked spectra of real images sampled without replacement.
/// Throws InsufficientData when a class has fewer than decoded_per_class members.
SyntheticMemory init_memory(const Tensor4& images, std::span<const int> labels,
                            const stats::MaskSet& masks, const BudgetSpec& budget,
                            std::uint32_t seed);

/// Dense (instances, C, H, W) spectra with zeros outside each class mask.
Tensor4 scatter(const SyntheticMemory& memory);
/// Coefficient-layout values read from dense spectra through the index lists.
std::vector<double> gather(const SyntheticMemory& memory, const Tensor4& spectra);

struct DecodedSet {
  Tensor4 images;
  std::vector<int> labels;
};

DecodedSet decode(const SyntheticMemory& memory);

/// "FRED1" container. Little-endian throughout.
///
///   0   magic 46 52 45 44 31 00
///   6   u32 classes, decoded_per_class, channels, H, W, k, tag, seed, ipc
///   42  per-class sorted u32 index lists (classes * k)
///       f32 coefficients, instance-major then channel-major
///
/// tag bits 0-7 hold the transform (0 DCT, 1 DFT, 2 DWT), bits 8-15 the
/// DWT level count and bits 16-23 the mask strategy.
std::vector<std::uint8_t> serialize(const SyntheticMemory& memory);
/// Throws FormatError carrying the offset of the first bad byte.
SyntheticMemory deserialize(std::span<const std::uint8_t> bytes);

void save(const SyntheticMemory& memory, const std::filesystem::path& path);
SyntheticMemory load(const std::filesystem::path& path);

constexpr std::size_t kHeaderBytes = 42;

}  // namespace fred::codec
