#include "fred/feature_net.hpp"

#include <algorithm>
#include <cmath>

#include "fred/errors.hpp"
#include "fred/parallel.hpp"
#include "fred/rng.hpp"

namespace fred::net {

namespace {

constexpr double kEps = 1e-5;

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

struct LayerCache {
  std::size_t cin = 0, h = 0, w = 0;  // input extents
  Matrix col;                          // (cin*9, h*w)
  Matrix xhat;                         // normalized conv output (cout, h*w)
  std::vector<double> inv_std;         // per output channel
  Matrix pooled;                       // (cout, (h/2)*(w/2)) after ReLU and pooling
};

struct Workspace {
  std::vector<LayerCache> layers;
  Matrix grad_a, grad_b, dcol;
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

void im2col(const double* x, std::size_t cin, std::size_t h, std::size_t w, Matrix& col) {
  col.resize(Eigen::Index(cin * 9), Eigen::Index(h * w));
  for (std::size_t c = 0; c < cin; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        double* row = col.row(Eigen::Index(c * 9 + std::size_t(ky * 3 + kx))).data();
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = long(y) + ky - 1;
          double* out = row + y * w;
          if (sy < 0 || sy >= long(h)) {
            std::fill(out, out + w, 0.0);
            continue;
          }
          const double* in = x + (c * h + std::size_t(sy)) * w;
          for (std::size_t xx = 0; xx < w; ++xx) {
            const long sx = long(xx) + kx - 1;
            out[xx] = (sx < 0 || sx >= long(w)) ? 0.0 : in[sx];
          }
        }
      }
}

void col2im(const Matrix& dcol, std::size_t cin, std::size_t h, std::size_t w, double* dx) {
  std::fill(dx, dx + cin * h * w, 0.0);
  for (std::size_t c = 0; c < cin; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = dcol.row(Eigen::Index(c * 9 + std::size_t(ky * 3 + kx))).data();
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = long(y) + ky - 1;
          if (sy < 0 || sy >= long(h)) continue;
          double* out = dx + (c * h + std::size_t(sy)) * w;
          const double* in = row + y * w;
          for (std::size_t xx = 0; xx < w; ++xx) {
            const long sx = long(xx) + kx - 1;
            if (sx >= 0 && sx < long(w)) out[sx] += in[xx];
          }
        }
      }
}

void check_input(const NetSpec& spec, const Tensor4& x) {
  const auto& s = x.shape();
  if (s.c != spec.in_channels || s.h != spec.in_height || s.w != spec.in_width)
    throw ShapeError("input " + s.str() + " does not match the network input (" +
                     std::to_string(spec.in_channels) + ", " + std::to_string(spec.in_height) + ", " +
                     std::to_string(spec.in_width) + ")");
}

// Runs one instance through the conv stack, keeping what backward needs.
void forward_instance(const NetParams& p, const double* x, Workspace& ws) {
  const auto& spec = p.spec;
  const std::size_t cout = std::size_t(spec.width);
  ws.layers.resize(std::size_t(spec.depth));
  std::size_t cin = spec.in_channels, h = spec.in_height, w = spec.in_width;
  const double* input = x;
  for (int l = 0; l < spec.depth; ++l) {
    auto& L = ws.layers[std::size_t(l)];
    L.cin = cin;
    L.h = h;
    L.w = w;
    im2col(input, cin, h, w, L.col);
    ConstMap weight(p.block(std::size_t(l)).data(), Eigen::Index(cout), Eigen::Index(cin * 9));
    L.xhat.noalias() = weight * L.col;
    L.inv_std.resize(cout);
    const double inv_hw = 1.0 / double(h * w);
    for (std::size_t c = 0; c < cout; ++c) {
      auto row = L.xhat.row(Eigen::Index(c));
      const double mean = row.sum() * inv_hw;
      row.array() -= mean;
      const double var = row.squaredNorm() * inv_hw;
      L.inv_std[c] = 1.0 / std::sqrt(var + kEps);
      row *= L.inv_std[c];
    }
    const std::size_t ph = h / 2, pw = w / 2;
    L.pooled.resize(Eigen::Index(cout), Eigen::Index(ph * pw));
    for (std::size_t c = 0; c < cout; ++c) {
      const double* a = L.xhat.row(Eigen::Index(c)).data();
      double* out = L.pooled.row(Eigen::Index(c)).data();
      for (std::size_t i = 0; i < ph; ++i)
        for (std::size_t j = 0; j < pw; ++j) {
          const double* r0 = a + (2 * i) * w + 2 * j;
          const double* r1 = r0 + w;
          out[i * pw + j] = 0.25 * (std::max(r0[0], 0.0) + std::max(r0[1], 0.0) +
                                    std::max(r1[0], 0.0) + std::max(r1[1], 0.0));
        }
    }
    input = L.pooled.data();
    cin = cout;
    h = ph;
    w = pw;
  }
}

const Matrix& features_of(const Workspace& ws) { return ws.layers.back().pooled; }

// Backpropagates dfeat (flattened final pool) through the conv stack.
// Writes the input gradient to dx when non-null and accumulates weight
// gradients into dparams when non-null.
void backward_instance(const NetParams& p, Workspace& ws, const double* dfeat, double* dx,
                       double* dparams) {
  const std::size_t cout = std::size_t(p.spec.width);
  Matrix* upstream = &ws.grad_a;
  Matrix* next = &ws.grad_b;
  {
    const auto& last = ws.layers.back();
    upstream->resize(last.pooled.rows(), last.pooled.cols());
    std::copy(dfeat, dfeat + last.pooled.size(), upstream->data());
  }
  for (int l = p.spec.depth - 1; l >= 0; --l) {
    auto& L = ws.layers[std::size_t(l)];
    const std::size_t h = L.h, w = L.w, ph = h / 2, pw = w / 2, hw = h * w;
    // Through pooling and ReLU into dxhat (stored in `next`).
    next->setZero(Eigen::Index(cout), Eigen::Index(hw));
    for (std::size_t c = 0; c < cout; ++c) {
      const double* a = L.xhat.row(Eigen::Index(c)).data();
      const double* g = upstream->row(Eigen::Index(c)).data();
      double* d = next->row(Eigen::Index(c)).data();
      for (std::size_t i = 0; i < ph; ++i)
        for (std::size_t j = 0; j < pw; ++j) {
          const double q = 0.25 * g[i * pw + j];
          const std::size_t o = (2 * i) * w + 2 * j;
          if (a[o] > 0) d[o] = q;
          if (a[o + 1] > 0) d[o + 1] = q;
          if (a[o + w] > 0) d[o + w] = q;
          if (a[o + w + 1] > 0) d[o + w + 1] = q;
        }
    }
    // Instance norm: dy = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)).
    const double inv_hw = 1.0 / double(hw);
    for (std::size_t c = 0; c < cout; ++c) {
      auto d = next->row(Eigen::Index(c));
      auto a = L.xhat.row(Eigen::Index(c));
      const double m1 = d.sum() * inv_hw;
      const double m2 = d.dot(a) * inv_hw;
      d = L.inv_std[c] * (d.array() - m1 - a.array() * m2).matrix();
    }
    if (dparams) {
      MutMap dw(dparams + p.layout[std::size_t(l)].offset, Eigen::Index(cout), Eigen::Index(L.cin * 9));
      dw.noalias() += *next * L.col.transpose();
    }
    if (l == 0 && !dx) break;
    ConstMap weight(p.block(std::size_t(l)).data(), Eigen::Index(cout), Eigen::Index(L.cin * 9));
    ws.dcol.noalias() = weight.transpose() * *next;
    if (l == 0) {
      col2im(ws.dcol, L.cin, h, w, dx);
    } else {
      upstream->resize(Eigen::Index(L.cin), Eigen::Index(hw));
      col2im(ws.dcol, L.cin, h, w, upstream->data());
    }
  }
}

}  // namespace

std::size_t NetSpec::feature_dim() const {
  std::size_t h = in_height, w = in_width;
  for (int l = 0; l < depth; ++l) h /= 2, w /= 2;
  return std::size_t(width) * h * w;
}

void NetSpec::validate() const {
  if (depth < 1 || width < 1 || classes < 1 || in_channels == 0)
    throw ShapeError("network depth, width, classes and channels must be positive");
  if (feature_dim() == 0)
    throw ShapeError(std::to_string(depth) + " poolings shrink a " + std::to_string(in_height) + "x" +
                     std::to_string(in_width) + " input below 1x1");
}

NetSpec NetSpec::for_images(const Shape4& shape, int classes, int depth, int width) {
  NetSpec s{depth, width, shape.c, shape.h, shape.w, classes};
  s.validate();
  return s;
}

NetParams zero_params(const NetSpec& spec) {
  spec.validate();
  NetParams p;
  p.spec = spec;
  std::size_t offset = 0, cin = spec.in_channels;
  auto add = [&](std::string name, std::size_t size) {
    p.layout.push_back({std::move(name), offset, size});
    offset += size;
  };
  for (int l = 0; l < spec.depth; ++l) {
    add("conv" + std::to_string(l), std::size_t(spec.width) * cin * 9);
    cin = std::size_t(spec.width);
  }
  add("head.weight", std::size_t(spec.classes) * spec.feature_dim());
  add("head.bias", std::size_t(spec.classes));
  p.values.assign(offset, 0.0);
  return p;
}

NetParams init_params(const NetSpec& spec, std::uint64_t seed) {
  NetParams p = zero_params(spec);
  Rng rng(seed);
  std::size_t cin = spec.in_channels;
  for (int l = 0; l < spec.depth; ++l) {
    const double sd = std::sqrt(2.0 / double(cin * 9));
    for (auto& v : p.block(std::size_t(l))) v = sd * rng.normal();
    cin = std::size_t(spec.width);
  }
  const double sd = std::sqrt(1.0 / double(spec.feature_dim()));
  for (auto& v : p.block(p.head_weight_block())) v = sd * rng.normal();
  return p;
}

Matrix embed(const NetParams& params, const Tensor4& x) {
  check_input(params.spec, x);
  const std::size_t n = x.shape().n, f = params.spec.feature_dim();
  Matrix out{Eigen::Index(n), Eigen::Index(f)};
  parallel_for(n, [&](std::size_t i) {
    auto& ws = workspace();
    forward_instance(params, x.instance(i).data(), ws);
    const auto& feat = features_of(ws);
    std::copy(feat.data(), feat.data() + f, out.row(Eigen::Index(i)).data());
  });
  return out;
}

Tensor4 embed_vjp(const NetParams& params, const Tensor4& x, const Matrix& upstream) {
  check_input(params.spec, x);
  const std::size_t n = x.shape().n, f = params.spec.feature_dim();
  if (std::size_t(upstream.rows()) != n || std::size_t(upstream.cols()) != f)
    throw ShapeError("upstream gradient must be (N, feature_dim)");
  Tensor4 dx(x.shape());
  parallel_for(n, [&](std::size_t i) {
    auto& ws = workspace();
    forward_instance(params, x.instance(i).data(), ws);
    backward_instance(params, ws, upstream.row(Eigen::Index(i)).data(), dx.instance(i).data(), nullptr);
  });
  return dx;
}

Matrix logits(const NetParams& params, const Tensor4& x) {
  const Matrix feats = embed(params, x);
  const auto& spec = params.spec;
  ConstMap w(params.block(params.head_weight_block()).data(), spec.classes, Eigen::Index(spec.feature_dim()));
  Eigen::Map<const Eigen::RowVectorXd> b(params.block(params.head_bias_block()).data(), spec.classes);
  Matrix z = feats * w.transpose();
  z.rowwise() += b;
  return z;
}

std::vector<int> predict(const NetParams& params, const Tensor4& x) {
  const Matrix z = logits(params, x);
  std::vector<int> out(std::size_t(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index arg = 0;
    z.row(i).maxCoeff(&arg);
    out[std::size_t(i)] = int(arg);
  }
  return out;
}

ClassifyResult classify_forward_backward(const NetParams& params, const Tensor4& x,
                                         std::span<const int> labels) {
  check_input(params.spec, x);
  const auto& spec = params.spec;
  const std::size_t n = x.shape().n, f = spec.feature_dim(), k = std::size_t(spec.classes);
  if (labels.size() != n) throw ShapeError("label count does not match batch size");
  if (n == 0) throw InvalidInput("empty batch");
  for (int l : labels)
    if (l < 0 || l >= spec.classes) throw InvalidInput("label " + std::to_string(l) + " out of range");

  ConstMap w(params.block(params.head_weight_block()).data(), Eigen::Index(k), Eigen::Index(f));
  const double* bias = params.block(params.head_bias_block()).data();
  const std::size_t np = params.values.size();
  const auto& hw_block = params.layout[params.head_weight_block()];
  const auto& hb_block = params.layout[params.head_bias_block()];

  ClassifyResult r;
  r.probabilities.resize(Eigen::Index(n), Eigen::Index(k));
  std::vector<double> per_loss(n);
  // Per-instance gradients, reduced in index order so results do not depend on threading.
  Matrix grads{Eigen::Index(n), Eigen::Index(np)};
  parallel_for(n, [&](std::size_t i) {
    auto& ws = workspace();
    forward_instance(params, x.instance(i).data(), ws);
    Eigen::Map<const Eigen::RowVectorXd> feat(features_of(ws).data(), Eigen::Index(f));
    Eigen::RowVectorXd z = feat * w.transpose();
    for (std::size_t c = 0; c < k; ++c) z[Eigen::Index(c)] += bias[c];
    const double zmax = z.maxCoeff();
    Eigen::RowVectorXd e = (z.array() - zmax).exp().matrix();
    const double s = e.sum();
    Eigen::RowVectorXd prob = e / s;
    r.probabilities.row(Eigen::Index(i)) = prob;
    const auto y = Eigen::Index(labels[i]);
    per_loss[i] = -(z[y] - zmax - std::log(s));

    auto g = grads.row(Eigen::Index(i));
    g.setZero();
    Eigen::RowVectorXd dz = prob / double(n);
    dz[y] -= 1.0 / double(n);
    MutMap dw(g.data() + hw_block.offset, Eigen::Index(k), Eigen::Index(f));
    dw.noalias() = dz.transpose() * feat;
    for (std::size_t c = 0; c < k; ++c) g[Eigen::Index(hb_block.offset + c)] = dz[Eigen::Index(c)];
    Eigen::RowVectorXd dfeat = dz * w;
    backward_instance(params, ws, dfeat.data(), nullptr, g.data());
  });
  r.grads.assign(np, 0.0);
  Eigen::Map<Eigen::RowVectorXd> total(r.grads.data(), Eigen::Index(np));
  for (std::size_t i = 0; i < n; ++i) {
    total += grads.row(Eigen::Index(i));
    r.loss += per_loss[i];
  }
  r.loss /= double(n);
  return r;
}

}  // namespace fred::net
