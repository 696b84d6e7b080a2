#include "fred/distill_engine.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "fred/errors.hpp"
#include "fred/frequency.hpp"
#include "fred/rng.hpp"

namespace fred::distill {

namespace {

using net::Matrix;

std::vector<std::vector<std::size_t>> members_by_class(std::span<const int> labels, int class_count) {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(class_count));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= class_count)
      throw InvalidInput("label " + std::to_string(labels[i]) + " out of range");
    out[std::size_t(labels[i])].push_back(i);
  }
  return out;
}

// Draws up to `per_class` members of every class without replacement.
std::vector<std::size_t> sample_per_class(const std::vector<std::vector<std::size_t>>& members,
                                          std::size_t per_class, Rng& rng) {
  std::vector<std::size_t> out;
  for (const auto& m : members) {
    if (per_class == 0 || per_class >= m.size()) {
      out.insert(out.end(), m.begin(), m.end());
      continue;
    }
    for (auto j : rng.sample_without_replacement(m.size(), per_class)) out.push_back(m[j]);
  }
  return out;
}

// What the optimizer needs from a synthetic-set representation.
struct Parameterization {
  std::span<double> values;
  std::vector<int> labels;
  std::function<Tensor4()> decode;
  std::function<std::vector<double>(const Tensor4&)> pullback;
};

struct LoopResult {
  std::vector<TracePoint> trace;
  std::vector<std::string> warnings;
};

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

LoopResult optimize(Parameterization& p, const data::LabeledDataset& dataset,
                    const DistillConfig& config, const TraceCallback& on_trace) {
  const auto real_members = members_by_class(dataset.labels, dataset.class_count);
  const auto syn_members = members_by_class(p.labels, dataset.class_count);
  const auto spec = net::NetSpec::for_images(dataset.images.shape(), dataset.class_count,
                                             config.net_depth, config.net_width);
  std::vector<double> velocity(p.values.size(), 0.0);
  std::set<int> skipped;
  LoopResult out;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t it = 0; it < config.iterations; ++it) {
    Rng rng(derive_seed(config.seed, it, 0));
    const auto real_idx = sample_per_class(real_members, config.batch_real, rng);
    const Tensor4 real = dataset.images.gather(real_idx);
    std::vector<int> real_labels;
    for (auto i : real_idx) real_labels.push_back(dataset.labels[i]);

    const Tensor4 decoded = p.decode();
    const auto syn_idx = sample_per_class(syn_members, config.batch_syn, rng);
    const Tensor4 syn = decoded.gather(syn_idx);
    std::vector<int> syn_labels;
    for (auto i : syn_idx) syn_labels.push_back(p.labels[i]);

    double loss = 0.0;
    Tensor4 image_grad(decoded.shape());
    const double share = 1.0 / double(config.nets_per_step);
    for (std::size_t j = 0; j < config.nets_per_step; ++j) {
      const auto params = net::init_params(spec, derive_seed(config.seed, it, j + 1));
      auto r = dm_loss_and_image_grad(syn, syn_labels, real, real_labels, params, dataset.class_count);
      loss += share * r.loss;
      for (std::size_t s = 0; s < syn_idx.size(); ++s) {
        auto dst = image_grad.instance(syn_idx[s]);
        auto src = r.grad.instance(s);
        for (std::size_t q = 0; q < dst.size(); ++q) dst[q] += share * src[q];
      }
      for (int c : r.skipped_classes)
        if (skipped.insert(c).second)
          out.warnings.push_back("class " + std::to_string(c) + " has no real or synthetic members; skipped");
    }
    if (!std::isfinite(loss) || !image_grad.all_finite()) throw DivergenceError(it);
    const auto grads = p.pullback(image_grad);

    if (it % config.log_every == 0 || it + 1 == config.iterations) {
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      out.trace.push_back({it, loss, ms});
      if (on_trace) on_trace(out.trace.back());
    }
    for (std::size_t q = 0; q < velocity.size(); ++q) {
      velocity[q] = config.momentum * velocity[q] + grads[q];
      p.values[q] -= config.lr * velocity[q];
    }
    if (!all_finite(p.values)) throw DivergenceError(it);
  }
  return out;
}

// ipc images per class, picked like init_memory picks its sources.
std::pair<Tensor4, std::vector<int>> sample_real(const data::LabeledDataset& dataset, std::size_t ipc,
                                                 std::uint32_t seed) {
  const auto members = members_by_class(dataset.labels, dataset.class_count);
  std::vector<std::size_t> picked;
  std::vector<int> labels;
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].size() < ipc)
      throw InsufficientData("class " + std::to_string(c) + " has " + std::to_string(members[c].size()) +
                             " images; " + std::to_string(ipc) + " requested");
    Rng rng(derive_seed(seed, c));
    for (auto j : rng.sample_without_replacement(members[c].size(), ipc)) {
      picked.push_back(members[c][j]);
      labels.push_back(int(c));
    }
  }
  return {dataset.images.gather(picked), labels};
}

}  // namespace

void DistillConfig::validate() const {
  if (iterations == 0) throw ConfigError("iterations must be positive");
  if (batch_real == 0) throw ConfigError("batch_real must be positive");
  if (nets_per_step == 0) throw ConfigError("nets_per_step must be positive");
  if (log_every == 0) throw ConfigError("log_every must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite non-negative number");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (net_depth < 1 || net_width < 1) throw ConfigError("network depth and width must be positive");
}

void write_trace_csv(std::span<const TracePoint> trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << "iter,loss,wall_ms\n";
  char line[96];
  for (const auto& t : trace) {
    std::snprintf(line, sizeof line, "%zu,%.9e,%.3f\n", t.iteration, t.loss, t.wall_ms);
    out << line;
  }
  if (!out) throw InvalidInput("write failed for " + path.string());
}

ImageLoss dm_loss_and_image_grad(const Tensor4& syn, std::span<const int> syn_labels,
                                 const Tensor4& real, std::span<const int> real_labels,
                                 const net::NetParams& net, int class_count) {
  if (syn_labels.size() != syn.shape().n || real_labels.size() != real.shape().n)
    throw ShapeError("label count does not match batch size");
  const auto syn_members = members_by_class(syn_labels, class_count);
  const auto real_members = members_by_class(real_labels, class_count);
  const Matrix fr = embed(net, real);
  const Matrix fs = embed(net, syn);

  ImageLoss out;
  Matrix upstream = Matrix::Zero(fs.rows(), fs.cols());
  for (int c = 0; c < class_count; ++c) {
    const auto& sm = syn_members[std::size_t(c)];
    const auto& rm = real_members[std::size_t(c)];
    if (sm.empty() || rm.empty()) {
      out.skipped_classes.push_back(c);
      continue;
    }
    Eigen::RowVectorXd mr = Eigen::RowVectorXd::Zero(fr.cols());
    Eigen::RowVectorXd ms = Eigen::RowVectorXd::Zero(fs.cols());
    for (auto i : rm) mr += fr.row(Eigen::Index(i));
    for (auto i : sm) ms += fs.row(Eigen::Index(i));
    mr /= double(rm.size());
    ms /= double(sm.size());
    const Eigen::RowVectorXd diff = ms - mr;
    out.loss += diff.squaredNorm();
    const Eigen::RowVectorXd g = (2.0 / double(sm.size())) * diff;
    for (auto i : sm) upstream.row(Eigen::Index(i)) = g;
  }
  out.grad = embed_vjp(net, syn, upstream);
  return out;
}

CoefficientLoss dm_loss_and_grad(const codec::SyntheticMemory& memory, const Tensor4& real,
                                 std::span<const int> real_labels, const net::NetParams& net) {
  const auto decoded = codec::decode(memory);
  auto r = dm_loss_and_image_grad(decoded.images, decoded.labels, real, real_labels, net,
                                  int(memory.classes()));
  const Tensor4 spectral = freq::adjoint_forward(r.grad, memory.budget.transform);
  return {r.loss, codec::gather(memory, spectral), std::move(r.skipped_classes)};
}

DistillResult distill(const data::LabeledDataset& dataset, const stats::MaskSet& masks,
                      const codec::BudgetSpec& budget, const DistillConfig& config,
                      const TraceCallback& on_trace) {
  config.validate();
  dataset.validate();
  if (masks.classes() != std::size_t(dataset.class_count))
    throw ShapeError("mask set has " + std::to_string(masks.classes()) + " classes, dataset has " +
                     std::to_string(dataset.class_count));
  DistillResult result;
  result.memory = codec::init_memory(dataset.images, dataset.labels, masks, budget, config.seed);
  auto& memory = result.memory;

  Parameterization p;
  p.values = memory.coefficients;
  p.labels = memory.labels;
  p.decode = [&] { return codec::decode(memory).images; };
  p.pullback = [&](const Tensor4& g) {
    return codec::gather(memory, freq::adjoint_forward(g, memory.budget.transform));
  };
  auto loop = optimize(p, dataset, config, on_trace);
  result.trace = std::move(loop.trace);
  result.warnings = std::move(loop.warnings);
  return result;
}

Tensor4 downsample(const Tensor4& x, std::size_t scale) {
  const auto& s = x.shape();
  if (scale == 0 || s.h % scale || s.w % scale)
    throw ShapeError("scale " + std::to_string(scale) + " does not divide " + s.str());
  const std::size_t h = s.h / scale, w = s.w / scale;
  Tensor4 out({s.n, s.c, h, w});
  const double inv = 1.0 / double(scale * scale);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j) out(n, c, i / scale, j / scale) += inv * x(n, c, i, j);
  return out;
}

Tensor4 upsample_nearest(const Tensor4& x, std::size_t scale) {
  if (scale == 0) throw ShapeError("scale must be positive");
  const auto& s = x.shape();
  Tensor4 out({s.n, s.c, s.h * scale, s.w * scale});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < s.h * scale; ++i)
        for (std::size_t j = 0; j < s.w * scale; ++j) out(n, c, i, j) = x(n, c, i / scale, j / scale);
  return out;
}

Tensor4 SpatialSet::decode() const { return scale == 1 ? stored : upsample_nearest(stored, scale); }

BaselineResult run_baseline_resize(const data::LabeledDataset& dataset, std::size_t ipc,
                                   std::size_t scale, const DistillConfig& config,
                                   const TraceCallback& on_trace) {
  config.validate();
  dataset.validate();
  if (ipc == 0) throw InvalidBudget("ipc must be positive");
  const auto& s = dataset.images.shape();
  if (scale == 0 || s.h % scale || s.w % scale)
    throw ShapeError("scale " + std::to_string(scale) + " does not divide " + s.str());

  BaselineResult result;
  auto& set = result.set;
  set.scale = scale;
  set.class_count = dataset.class_count;
  auto [images, labels] = sample_real(dataset, ipc * scale * scale, config.seed);
  set.stored = scale == 1 ? std::move(images) : downsample(images, scale);
  set.labels = std::move(labels);

  Parameterization p;
  p.values = set.stored.data();
  p.labels = set.labels;
  p.decode = [&] { return set.decode(); };
  p.pullback = [&](const Tensor4& g) {
    // Adjoint of nearest upsampling sums each block.
    if (scale == 1) return std::vector<double>(g.data().begin(), g.data().end());
    Tensor4 d = downsample(g, scale);
    for (auto& v : d.data()) v *= double(scale * scale);
    return std::move(d.storage());
  };
  auto loop = optimize(p, dataset, config, on_trace);
  result.trace = std::move(loop.trace);
  result.warnings = std::move(loop.warnings);
  return result;
}

BaselineResult run_baseline_inputsized(const data::LabeledDataset& dataset, std::size_t ipc,
                                       const DistillConfig& config, const TraceCallback& on_trace) {
  return run_baseline_resize(dataset, ipc, 1, config, on_trace);
}

}  // namespace fred::distill
