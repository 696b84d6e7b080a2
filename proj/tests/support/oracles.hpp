#pragma once

// Test-only reference computations. Nothing here calls the library code paths
// it is used to check.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include "fred/rng.hpp"
#include "fred/tensor.hpp"

namespace oracle {

inline fred::Tensor4 random_tensor(fred::Shape4 s, std::uint64_t seed, double scale = 1.0) {
  fred::Rng rng(seed);
  fred::Tensor4 t(s);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

/// Direct double sum with the separable cosine basis, orthonormal scaling.
inline std::vector<double> naive_dct2d(const std::vector<double>& x, std::size_t h, std::size_t w) {
  std::vector<double> f(h * w, 0.0);
  const double pi = std::numbers::pi;
  for (std::size_t u = 0; u < h; ++u) {
    const double su = std::sqrt((u == 0 ? 1.0 : 2.0) / double(h));
    for (std::size_t v = 0; v < w; ++v) {
      const double sv = std::sqrt((v == 0 ? 1.0 : 2.0) / double(w));
      long double acc = 0.0;
      for (std::size_t a = 0; a < h; ++a)
        for (std::size_t b = 0; b < w; ++b)
          acc += x[a * w + b] * std::cos(pi / double(h) * (double(a) + 0.5) * double(u)) *
                 std::cos(pi / double(w) * (double(b) + 0.5) * double(v));
      f[u * w + v] = su * sv * double(acc);
    }
  }
  return f;
}

/// Unitary 2D DFT by direct summation, then the documented real packing.
inline std::vector<double> naive_dft2d_packed(const std::vector<double>& x, std::size_t h,
                                              std::size_t w) {
  using cplx = std::complex<double>;
  std::vector<cplx> F(h * w);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      cplx acc = 0.0;
      for (std::size_t a = 0; a < h; ++a)
        for (std::size_t b = 0; b < w; ++b)
          acc += x[a * w + b] * std::polar(1.0, -2.0 * std::numbers::pi *
                                                    (double(u * a) / double(h) +
                                                     double(v * b) / double(w)));
      F[u * w + v] = acc / std::sqrt(double(h * w));
    }
  std::vector<double> out(h * w);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      const std::size_t i = u * w + v;
      const std::size_t j = ((h - u) % h) * w + (w - v) % w;
      if (i == j) out[i] = F[i].real();
      if (i < j) {
        out[i] = std::sqrt(2.0) * F[i].real();
        out[j] = std::sqrt(2.0) * F[i].imag();
      }
    }
  return out;
}

/// Population variance of each column of a row-major (rows x cols) matrix.
inline std::vector<double> column_variance(const std::vector<double>& m, std::size_t rows,
                                           std::size_t cols) {
  std::vector<double> out(cols, 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < rows; ++i) mean += m[i * cols + j];
    mean /= double(rows);
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += (m[i * cols + j] - mean) * (m[i * cols + j] - mean);
    out[j] = s / double(rows);
  }
  return out;
}

/// Calls visit(subset) for every k-subset of {0..n-1} (lexicographic).
inline void for_each_combination(std::size_t n, std::size_t k,
                                 const std::function<void(const std::vector<std::size_t>&)>& visit) {
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  if (k > n) return;
  while (true) {
    visit(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

/// Central difference of a scalar function along one coordinate of `x`.
inline double central_difference(const std::function<double()>& f, double& coordinate, double h) {
  const double saved = coordinate;
  coordinate = saved + h;
  const double fp = f();
  coordinate = saved - h;
  const double fm = f();
  coordinate = saved;
  return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
