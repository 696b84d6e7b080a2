#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fred/frequency.hpp"
#include "fred/tensor.hpp"

namespace fred::stats {

enum class MaskStrategy { EVR, LowPass, HighPass, BandStop, Random, Amplitude, Subband };

std::string strategy_name(MaskStrategy s);
/// Accepts evr, low, high, band, random, amplitude, subband.
MaskStrategy parse_strategy(const std::string& text);

/// Per-dimension variance statistics of one class (or of a whole set).
struct EvrMap {
  int class_id = -1;  // -1 for a pooled, class-agnostic map
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> eta;             // variance / total variance
  std::vector<double> variance;        // population variance, channel-averaged
  std::vector<double> mean_amplitude;  // mean |coefficient|, channel-averaged
  std::size_t sample_count = 0;
  /// Set when the total variance is zero; eta is then uniform.
  bool degenerate = false;

  double total_variance() const;
};

struct MaskSet {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t k = 0;
  MaskStrategy strategy = MaskStrategy::EVR;
  std::vector<BinaryMask> masks;                      // one per class
  std::vector<std::vector<std::uint32_t>> index_lists;  // sorted u*W+v, one per class

  std::size_t classes() const { return masks.size(); }
  /// Builds the set from per-class index lists (sorted on the way in).
  static MaskSet from_index_lists(std::size_t h, std::size_t w,
                                  std::vector<std::vector<std::uint32_t>> lists,
                                  MaskStrategy strategy);
  /// Throws ShapeError when a mask disagrees with its list or the k count.
  void validate() const;
};

/// EVR of `class_id` over the spectra whose label matches.
/// Throws InsufficientData with fewer than two members.
EvrMap compute_evr(const Tensor4& spectra, std::span<const int> labels, int class_id);

/// EVR pooled over every instance, ignoring labels.
EvrMap compute_evr_pooled(const Tensor4& spectra);

/// Exactly k ones chosen by `strategy`. Ties break on (u+v, u, v).
/// Throws InvalidBudget unless 1 <= k <= H*W.
BinaryMask build_mask(const EvrMap& evr, std::size_t k, MaskStrategy strategy, std::uint64_t seed);

struct MaskSetOptions {
  std::size_t k = 0;
  MaskStrategy strategy = MaskStrategy::EVR;
  std::uint64_t seed = 0;
  /// Use one pooled EVR map for every class instead of per-class maps.
  bool pooled_eta = false;
};

/// Per-class masks from forward-transformed training spectra.
MaskSet build_mask_set(const Tensor4& spectra, std::span<const int> labels, int class_count,
                       const MaskSetOptions& opts);

/// Haar LL band of the given level, identical for every class.
MaskSet subband_mask_set(int class_count, std::size_t h, std::size_t w, int levels);

/// Sum of eta over the selected dimensions.
double masked_variance_sum(const EvrMap& evr, const BinaryMask& mask);

struct Prop1Report {
  double freq_side = 0.0;     // sum of masked frequency-domain variances
  double spatial_side = 0.0;  // total pixel variance of the masked reconstruction
  double abs_diff = 0.0;
  double total_variance = 0.0;
};

/// Masked variance is preserved by the inverse transform.
Prop1Report check_prop1(const Tensor4& images, const BinaryMask& mask,
                        freq::TransformKind kind = freq::TransformKind::dct());

struct Corollary1Report {
  double evr_freq = 0.0;     // top-k EVR sum in the transform domain
  double evr_spatial = 0.0;  // top-k EVR sum over raw pixels
};

Corollary1Report check_corollary1(const Tensor4& images, std::size_t k,
                                  freq::TransformKind kind = freq::TransformKind::dct());

/// Descending cumulative sum of eta, entries 1..H*W.
std::vector<double> cumulative_top_k(const EvrMap& evr);

/// Flat indices of the k largest values under the (u+v, u, v) tie-break.
std::vector<std::uint32_t> top_k_indices(std::span<const double> score, std::size_t h,
                                         std::size_t w, std::size_t k);

}  // namespace fred::stats
