#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fred/spectral_stats.hpp"
#include "fred/tensor.hpp"

namespace fred::data {

struct LabeledDataset {
  Tensor4 images;
  std::vector<int> labels;
  int class_count = 0;
  std::string name;

  std::size_t size() const noexcept { return labels.size(); }
  std::vector<std::size_t> class_counts() const;
  /// FNV-1a over shape, labels and little-endian pixel bits.
  std::uint64_t content_hash() const;
  /// Lower-case hex of content_hash().
  std::string hash_hex() const;

  LabeledDataset subset(std::span<const std::size_t> indices) const;
  /// The first `per_class` instances of every class, in original order.
  LabeledDataset first_per_class(std::size_t per_class) const;
  /// Throws InvalidInput when labels, shape or class_count disagree.
  void validate() const;
};

/// MNIST-style IDX pair. Pixels are scaled by 1/255.
/// Throws FormatError (with byte offset) on bad magic, dims, counts or truncation.
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
/// Writes an IDX pair; values are clamped to [0, 1] and rounded to bytes.
void save_idx(const LabeledDataset& set, const std::filesystem::path& images,
              const std::filesystem::path& labels);

struct PlantedDataset {
  LabeledDataset set;
  /// Sorted flat DCT indices carrying the signal, one list per class.
  std::vector<std::vector<std::uint32_t>> planted;
};

/// Single-channel images whose DCT spectra are a class-specific mean plus
/// unit-variance noise on a few planted dims, then white pixel noise of
/// standard deviation noise_sigma everywhere. Values are not clamped.
PlantedDataset gen_planted(int classes, std::size_t per_class, std::size_t h, std::size_t w,
                           std::size_t planted_dims_per_class, double noise_sigma,
                           std::uint64_t seed);

/// Tiles images into a binary PGM (1 channel) or PPM (3 channels), row-major.
/// Values are clamped to [0, 1]. `cols` = 0 picks ceil(sqrt(N)).
void export_grid(const Tensor4& images, const std::filesystem::path& path, std::size_t cols = 0);

/// Plain-text grid: header line "EVR H W class" then H rows of W values.
void write_evr_grid(const stats::EvrMap& evr, const std::filesystem::path& path);
stats::EvrMap read_evr_grid(const std::filesystem::path& path);

}  // namespace fred::data
