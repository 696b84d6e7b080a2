#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "fred/tensor.hpp"

namespace fred::freq {

enum class TransformTag : std::uint8_t { DCT = 0, DFT = 1, DWT = 2 };

struct TransformKind {
  TransformTag tag = TransformTag::DCT;
  /// Number of Haar levels; only meaningful for DWT.
  int dwt_levels = 1;

  static TransformKind dct() { return {TransformTag::DCT, 1}; }
  static TransformKind dft() { return {TransformTag::DFT, 1}; }
  static TransformKind dwt(int levels) { return {TransformTag::DWT, levels}; }

  bool operator==(const TransformKind&) const = default;

  std::string name() const;
  /// Accepts "dct", "dft", "dwt" (levels set separately).
  static TransformKind parse(const std::string& text);
};

/// 1D DCT algorithm selection. Auto uses the direct O(N^2) matrix for N <= 64
/// and the FFT route for larger power-of-two lengths.
enum class DctPath { Auto, Direct, Fast };

struct TransformOptions {
  DctPath dct_path = DctPath::Auto;
};

// All transforms are orthonormal and act independently on every (n, c) plane.
//
// DFT packing: for a plane of extent (H, W) let F be the unitary 2D DFT and
// for flat index i = u*W + v let j = ((H-u) mod H)*W + (W-v) mod W be the
// index of the conjugate bin. If i < j the packed array holds sqrt(2)*Re F(u,v)
// at i and sqrt(2)*Im F(u,v) at j. If i == j the bin is self-conjugate and i
// holds Re F(u,v). The packed map is an orthogonal matrix on R^(H*W).
//
// DWT layout: Mallat ordering; after L levels the LL band occupies the
// top-left (H >> L, W >> L) block.

/// Throws InvalidInput for non-finite data and ShapeError for DWT on
/// non-power-of-two extents or too many levels.
Tensor4 forward(const Tensor4& x, TransformKind kind, const TransformOptions& opts = {});
Tensor4 inverse(const Tensor4& f, TransformKind kind, const TransformOptions& opts = {});

/// Adjoint of inverse(): <inverse(f), g> == <f, adjoint_forward(g)>.
Tensor4 adjoint_forward(const Tensor4& g, TransformKind kind, const TransformOptions& opts = {});

/// || x - inverse(mask (.) forward(x)) ||_2 over the whole batch.
double truncation_error(const Tensor4& x, const BinaryMask& mask,
                        TransformKind kind = TransformKind::dct());

/// Zeroes every coefficient outside the mask, in every plane.
void apply_mask(Tensor4& spectra, const BinaryMask& mask);

// 1D orthonormal DCT-II / DCT-III on a single line.
void dct_1d(std::span<const double> in, std::span<double> out, DctPath path = DctPath::Auto);
void idct_1d(std::span<const double> in, std::span<double> out, DctPath path = DctPath::Auto);

/// Checks the DWT shape constraints without transforming.
void validate_kind(const Shape4& shape, TransformKind kind);

}  // namespace fred::freq
