#include "fred/frequency.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "fred/errors.hpp"
#include "fred/parallel.hpp"

namespace fred::freq {

namespace {

using cplx = std::complex<double>;

constexpr std::size_t kDirectLimit = 64;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

int log2_exact(std::size_t n) {
  int l = 0;
  while ((std::size_t{1} << l) < n) ++l;
  return l;
}

// ---------------------------------------------------------------------------
// Complex FFT (radix-2) and direct DFT fallback.

struct FftPlan {
  std::size_t n = 0;
  std::vector<std::uint32_t> bitrev;
  // Twiddles of stage `len` start at offset len/2 - 1: e^{-+2 pi i j / len}, j < len/2.
  std::vector<cplx> fwd_tw;
  std::vector<cplx> inv_tw;

  explicit FftPlan(std::size_t len) : n(len), bitrev(len) {
    const int bits = log2_exact(len);
    for (std::size_t i = 0; i < len; ++i) {
      std::uint32_t r = 0;
      for (int b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= 1u << (bits - 1 - b);
      bitrev[i] = r;
    }
    for (std::size_t stage = 2; stage <= len; stage <<= 1)
      for (std::size_t j = 0; j < stage / 2; ++j) {
        const cplx w = std::polar(1.0, -2.0 * std::numbers::pi * double(j) / double(stage));
        fwd_tw.push_back(w);
        inv_tw.push_back(std::conj(w));
      }
  }

  // In place, unscaled.
  void run(std::span<cplx> a, bool inverse) const {
    for (std::size_t i = 0; i < n; ++i)
      if (i < bitrev[i]) std::swap(a[i], a[bitrev[i]]);
    const cplx* tw_all = inverse ? inv_tw.data() : fwd_tw.data();
    // First stage has unit twiddles.
    for (std::size_t start = 0; start + 1 < n; start += 2) {
      const cplx t = a[start + 1];
      a[start + 1] = a[start] - t;
      a[start] += t;
    }
    for (std::size_t len = 4; len <= n; len <<= 1) {
      const std::size_t half = len / 2;
      const cplx* tw = tw_all + (half - 1);
      for (std::size_t start = 0; start < n; start += len) {
        cplx* lo = a.data() + start;
        cplx* hi = lo + half;
        for (std::size_t j = 0; j < half; ++j) {
          // Plain product; std::complex's operator* adds inf/nan recovery.
          const double wr = tw[j].real(), wi = tw[j].imag(), hr = hi[j].real(), hv = hi[j].imag();
          const cplx t(wr * hr - wi * hv, wr * hv + wi * hr);
          hi[j] = lo[j] - t;
          lo[j] += t;
        }
      }
    }
  }
};

struct DftPlan {
  std::size_t n = 0;
  std::vector<cplx> roots;  // e^{-2 pi i m / n}
  std::unique_ptr<FftPlan> fft;

  explicit DftPlan(std::size_t len) : n(len), roots(len) {
    for (std::size_t m = 0; m < len; ++m)
      roots[m] = std::polar(1.0, -2.0 * std::numbers::pi * double(m) / double(len));
    if (is_pow2(len)) fft = std::make_unique<FftPlan>(len);
  }

  // Unscaled transform; scratch must hold n values.
  void run(std::span<cplx> a, bool inverse, std::span<cplx> scratch) const {
    if (fft) {
      fft->run(a, inverse);
      return;
    }
    for (std::size_t k = 0; k < n; ++k) {
      cplx acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        cplx w = roots[(k * t) % n];
        acc += a[t] * (inverse ? std::conj(w) : w);
      }
      scratch[k] = acc;
    }
    std::copy(scratch.begin(), scratch.begin() + n, a.begin());
  }
};

// ---------------------------------------------------------------------------
// Orthonormal DCT-II / DCT-III.

struct DctPlan {
  std::size_t n = 0;
  std::vector<double> scale;         // s_k
  std::unique_ptr<FftPlan> half_fft;  // length n/2, real-input trick
  std::vector<cplx> post;            // e^{-i pi k / 2n}
  std::vector<cplx> split;           // e^{-2 pi i k / n}, k < n/2
  mutable std::once_flag matrix_once;
  mutable std::vector<double> matrix;  // row-major C[k][t] = s_k cos(pi (2t+1) k / 2n)

  explicit DctPlan(std::size_t len) : n(len), scale(len) {
    for (std::size_t k = 0; k < n; ++k) scale[k] = std::sqrt((k == 0 ? 1.0 : 2.0) / double(n));
    if (is_pow2(n) && n >= 2) {
      half_fft = std::make_unique<FftPlan>(n / 2);
      post.resize(n);
      for (std::size_t k = 0; k < n; ++k)
        post[k] = std::polar(1.0, -std::numbers::pi * double(k) / double(2 * n));
      split.resize(n / 2);
      for (std::size_t k = 0; k < n / 2; ++k)
        split[k] = std::polar(1.0, -2.0 * std::numbers::pi * double(k) / double(n));
    }
  }

  const std::vector<double>& basis() const {
    std::call_once(matrix_once, [this] {
      matrix.resize(n * n);
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t t = 0; t < n; ++t)
          matrix[k * n + t] = scale[k] * std::cos(std::numbers::pi * double(2 * t + 1) *
                                                  double(k) / double(2 * n));
    });
    return matrix;
  }

  bool use_fast(DctPath path) const {
    if (!half_fft) return false;
    if (path == DctPath::Fast) return true;
    if (path == DctPath::Direct) return false;
    return n > kDirectLimit;
  }

  // buf must hold n complex values.
  void forward(const double* in, double* out, DctPath path, cplx* buf) const {
    if (!use_fast(path)) {
      const auto& m = basis();
      for (std::size_t k = 0; k < n; ++k) {
        const double* row = &m[k * n];
        double acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) acc += row[t] * in[t];
        out[k] = acc;
      }
      return;
    }
    // Makhoul reordering v[t] = x[2t], v[n-1-t] = x[2t+1]; the real sequence v
    // is packed as z[m] = v[2m] + i v[2m+1] and transformed at half length.
    const std::size_t h = n / 2;
    auto v = [&](std::size_t t) { return t < h ? in[2 * t] : in[2 * (n - 1 - t) + 1]; };
    cplx* z = buf;
    for (std::size_t m = 0; m < h; ++m) z[m] = cplx(v(2 * m), v(2 * m + 1));
    half_fft->run(std::span<cplx>(z, h), false);
    for (std::size_t k = 0; k < h; ++k) {
      const cplx zk = z[k];
      const cplx zc = std::conj(z[(h - k) % h]);
      const cplx even = 0.5 * (zk + zc);
      const cplx odd = cplx(0.0, -0.5) * (zk - zc);
      const cplx t = split[k] * odd;
      const cplx lo = even + t;
      const cplx hi = even - t;
      out[k] = scale[k] * (post[k] * lo).real();
      out[k + h] = scale[k + h] * (post[k + h] * hi).real();
    }
  }

  void inverse(const double* in, double* out, DctPath path, cplx* buf) const {
    if (!use_fast(path)) {
      const auto& m = basis();
      std::fill(out, out + n, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        const double* row = &m[k * n];
        const double c = in[k];
        for (std::size_t t = 0; t < n; ++t) out[t] += row[t] * c;
      }
      return;
    }
    const std::size_t h = n / 2;
    auto spectrum = [&](std::size_t k) {
      if (k == 0) return cplx(in[0] / scale[0], 0.0);
      return std::conj(post[k]) * cplx(in[k] / scale[k], -in[n - k] / scale[n - k]);
    };
    cplx* z = buf;
    for (std::size_t k = 0; k < h; ++k) {
      const cplx lo = spectrum(k);
      const cplx hi = spectrum(k + h);
      const cplx even = 0.5 * (lo + hi);
      const cplx odd = 0.5 * (lo - hi) * std::conj(split[k]);
      z[k] = even + cplx(0.0, 1.0) * odd;
    }
    half_fft->run(std::span<cplx>(z, h), true);
    const double s = 1.0 / double(h);
    auto put = [&](std::size_t t, double val) {
      if (t < h)
        out[2 * t] = val;
      else
        out[2 * (n - 1 - t) + 1] = val;
    };
    for (std::size_t m = 0; m < h; ++m) {
      put(2 * m, z[m].real() * s);
      put(2 * m + 1, z[m].imag() * s);
    }
  }
};

template <class Plan>
const Plan& cached_plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<Plan>> plans;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = plans[n];
  if (!slot) slot = std::make_unique<Plan>(n);
  return *slot;
}

// ---------------------------------------------------------------------------
// Plane-level transforms. `plane` is H x W row-major.

void transpose(const double* src, double* dst, std::size_t h, std::size_t w) {
  constexpr std::size_t B = 16;
  for (std::size_t i0 = 0; i0 < h; i0 += B)
    for (std::size_t j0 = 0; j0 < w; j0 += B)
      for (std::size_t i = i0; i < std::min(h, i0 + B); ++i)
        for (std::size_t j = j0; j < std::min(w, j0 + B); ++j) dst[j * h + i] = src[i * w + j];
}

void dct_plane(std::span<double> plane, std::size_t h, std::size_t w, bool inv, DctPath path) {
  const DctPlan& pw = cached_plan<DctPlan>(w);
  const DctPlan& ph = cached_plan<DctPlan>(h);
  thread_local std::vector<double> line;
  thread_local std::vector<double> tmp;
  thread_local std::vector<cplx> buf;
  line.resize(std::max(h, w));
  tmp.resize(h * w);
  buf.resize(std::max(h, w));
  auto pass = [&](const DctPlan& p, double* data, std::size_t count, std::size_t len) {
    for (std::size_t r = 0; r < count; ++r) {
      double* x = data + r * len;
      if (inv)
        p.inverse(x, line.data(), path, buf.data());
      else
        p.forward(x, line.data(), path, buf.data());
      std::copy(line.begin(), line.begin() + len, x);
    }
  };
  pass(pw, plane.data(), h, w);
  transpose(plane.data(), tmp.data(), h, w);
  pass(ph, tmp.data(), w, h);
  transpose(tmp.data(), plane.data(), w, h);
}

// Unitary 2D complex DFT in place.
void dft2d(std::vector<cplx>& a, std::size_t h, std::size_t w, bool inverse) {
  const DftPlan& pw = cached_plan<DftPlan>(w);
  const DftPlan& ph = cached_plan<DftPlan>(h);
  std::vector<cplx> scratch(std::max(h, w));
  std::vector<cplx> col(h);
  for (std::size_t r = 0; r < h; ++r) pw.run(std::span<cplx>(a).subspan(r * w, w), inverse, scratch);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) col[r] = a[r * w + c];
    ph.run(col, inverse, scratch);
    for (std::size_t r = 0; r < h; ++r) a[r * w + c] = col[r];
  }
  const double s = 1.0 / std::sqrt(double(h * w));
  for (auto& v : a) v *= s;
}

std::size_t conjugate_index(std::size_t i, std::size_t h, std::size_t w) {
  const std::size_t u = i / w;
  const std::size_t v = i % w;
  return ((h - u) % h) * w + (w - v) % w;
}

void dft_plane(std::span<double> plane, std::size_t h, std::size_t w, bool inv) {
  const std::size_t d = h * w;
  std::vector<cplx> a(d);
  if (!inv) {
    for (std::size_t i = 0; i < d; ++i) a[i] = plane[i];
    dft2d(a, h, w, false);
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t j = conjugate_index(i, h, w);
      if (i == j) {
        plane[i] = a[i].real();
      } else if (i < j) {
        plane[i] = std::numbers::sqrt2 * a[i].real();
        plane[j] = std::numbers::sqrt2 * a[i].imag();
      }
    }
    return;
  }
  const double r2 = 1.0 / std::numbers::sqrt2;
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t j = conjugate_index(i, h, w);
    if (i == j) {
      a[i] = plane[i];
    } else if (i < j) {
      a[i] = cplx(plane[i] * r2, plane[j] * r2);
      a[j] = std::conj(a[i]);
    }
  }
  dft2d(a, h, w, true);
  for (std::size_t i = 0; i < d; ++i) plane[i] = a[i].real();
}

void haar_plane(std::span<double> plane, std::size_t h, std::size_t w, int levels, bool inv) {
  const double r2 = 1.0 / std::numbers::sqrt2;
  std::vector<double> line(std::max(h, w));
  auto rows = [&](std::size_t bh, std::size_t bw) {
    const std::size_t half = bw / 2;
    for (std::size_t r = 0; r < bh; ++r) {
      double* x = plane.data() + r * w;
      if (!inv) {
        for (std::size_t j = 0; j < half; ++j) {
          line[j] = (x[2 * j] + x[2 * j + 1]) * r2;
          line[half + j] = (x[2 * j] - x[2 * j + 1]) * r2;
        }
      } else {
        for (std::size_t j = 0; j < half; ++j) {
          line[2 * j] = (x[j] + x[half + j]) * r2;
          line[2 * j + 1] = (x[j] - x[half + j]) * r2;
        }
      }
      std::copy(line.begin(), line.begin() + bw, x);
    }
  };
  auto cols = [&](std::size_t bh, std::size_t bw) {
    const std::size_t half = bh / 2;
    for (std::size_t c = 0; c < bw; ++c) {
      auto at = [&](std::size_t r) -> double& { return plane[r * w + c]; };
      if (!inv) {
        for (std::size_t j = 0; j < half; ++j) {
          line[j] = (at(2 * j) + at(2 * j + 1)) * r2;
          line[half + j] = (at(2 * j) - at(2 * j + 1)) * r2;
        }
      } else {
        for (std::size_t j = 0; j < half; ++j) {
          line[2 * j] = (at(j) + at(half + j)) * r2;
          line[2 * j + 1] = (at(j) - at(half + j)) * r2;
        }
      }
      for (std::size_t r = 0; r < bh; ++r) at(r) = line[r];
    }
  };
  if (!inv) {
    for (int l = 0; l < levels; ++l) {
      rows(h >> l, w >> l);
      cols(h >> l, w >> l);
    }
  } else {
    for (int l = levels - 1; l >= 0; --l) {
      cols(h >> l, w >> l);
      rows(h >> l, w >> l);
    }
  }
}

Tensor4 run(const Tensor4& x, TransformKind kind, const TransformOptions& opts, bool inv) {
  if (!x.all_finite()) throw InvalidInput("transform input contains non-finite values");
  validate_kind(x.shape(), kind);
  Tensor4 out = x;
  const auto& s = x.shape();
  const std::size_t planes = s.n * s.c;
  parallel_for(planes, [&](std::size_t p) {
    auto plane = out.data().subspan(p * s.plane(), s.plane());
    switch (kind.tag) {
      case TransformTag::DCT:
        dct_plane(plane, s.h, s.w, inv, opts.dct_path);
        break;
      case TransformTag::DFT:
        dft_plane(plane, s.h, s.w, inv);
        break;
      case TransformTag::DWT:
        haar_plane(plane, s.h, s.w, kind.dwt_levels, inv);
        break;
    }
  });
  return out;
}

}  // namespace

std::string TransformKind::name() const {
  switch (tag) {
    case TransformTag::DCT:
      return "dct";
    case TransformTag::DFT:
      return "dft";
    case TransformTag::DWT:
      return "dwt";
  }
  return "?";
}

TransformKind TransformKind::parse(const std::string& text) {
  if (text == "dct") return dct();
  if (text == "dft") return dft();
  if (text == "dwt") return dwt(1);
  throw ConfigError("unknown transform '" + text + "' (expected dct, dft or dwt)");
}

void validate_kind(const Shape4& shape, TransformKind kind) {
  if (shape.h < 1 || shape.w < 1) throw ShapeError("transform needs H >= 1 and W >= 1");
  if (kind.tag != TransformTag::DWT) return;
  if (!is_pow2(shape.h) || !is_pow2(shape.w))
    throw ShapeError("DWT requires power-of-two extents, got " + shape.str());
  const int max_levels = log2_exact(std::min(shape.h, shape.w));
  if (kind.dwt_levels < 1 || kind.dwt_levels > max_levels)
    throw ShapeError("DWT levels must lie in [1, " + std::to_string(max_levels) + "]");
}

Tensor4 forward(const Tensor4& x, TransformKind kind, const TransformOptions& opts) {
  return run(x, kind, opts, false);
}

Tensor4 inverse(const Tensor4& f, TransformKind kind, const TransformOptions& opts) {
  return run(f, kind, opts, true);
}

Tensor4 adjoint_forward(const Tensor4& g, TransformKind kind, const TransformOptions& opts) {
  // Every supported transform is an orthogonal matrix, so the adjoint of the
  // inverse is the forward map itself.
  return run(g, kind, opts, false);
}

void apply_mask(Tensor4& spectra, const BinaryMask& mask) {
  const auto& s = spectra.shape();
  if (mask.h() != s.h || mask.w() != s.w)
    throw ShapeError("mask extent does not match spectra " + s.str());
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    auto plane = spectra.data().subspan(p * s.plane(), s.plane());
    for (std::size_t i = 0; i < plane.size(); ++i)
      if (!mask[i]) plane[i] = 0.0;
  }
}

double truncation_error(const Tensor4& x, const BinaryMask& mask, TransformKind kind) {
  Tensor4 f = forward(x, kind);
  apply_mask(f, mask);
  const Tensor4 rec = inverse(f, kind);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.data()[i] - rec.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

void dct_1d(std::span<const double> in, std::span<double> out, DctPath path) {
  if (in.size() != out.size() || in.empty()) throw ShapeError("dct_1d length mismatch");
  std::vector<cplx> buf(in.size());
  cached_plan<DctPlan>(in.size()).forward(in.data(), out.data(), path, buf.data());
}

void idct_1d(std::span<const double> in, std::span<double> out, DctPath path) {
  if (in.size() != out.size() || in.empty()) throw ShapeError("idct_1d length mismatch");
  std::vector<cplx> buf(in.size());
  cached_plan<DctPlan>(in.size()).inverse(in.data(), out.data(), path, buf.data());
}

}  // namespace fred::freq
