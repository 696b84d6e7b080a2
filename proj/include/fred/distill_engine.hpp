#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fred/data_io.hpp"
#include "fred/feature_net.hpp"
#include "fred/memory_codec.hpp"

namespace fred::distill {

enum class LossKind { DM };

struct DistillConfig {
  std::size_t iterations = 1000;
  std::size_t batch_real = 32;  // real images per class per step
  std::size_t batch_syn = 0;    // synthetic instances per class per step, 0 = all
  double lr = 1.0;
  double momentum = 0.5;
  std::size_t nets_per_step = 1;
  std::uint32_t seed = 0;
  LossKind loss = LossKind::DM;
  std::size_t log_every = 10;
  int net_depth = 3;
  int net_width = 32;

  /// Throws ConfigError on zero counts, negative lr or momentum outside [0, 1).
  void validate() const;
};

struct TracePoint {
  std::size_t iteration = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

/// Writes `iter,loss,wall_ms` rows.
void write_trace_csv(std::span<const TracePoint> trace, const std::filesystem::path& path);

struct ImageLoss {
  double loss = 0.0;
  Tensor4 grad;  // d loss / d synthetic images
  std::vector<int> skipped_classes;
};

/// Distribution matching: sum over classes of the squared distance between
/// the mean real and mean synthetic embeddings. Classes missing from either
/// side are skipped and reported.
ImageLoss dm_loss_and_image_grad(const Tensor4& syn, std::span<const int> syn_labels,
                                 const Tensor4& real, std::span<const int> real_labels,
                                 const net::NetParams& net, int class_count);

struct CoefficientLoss {
  double loss = 0.0;
  std::vector<double> grads;  // memory coefficient layout
  std::vector<int> skipped_classes;
};

/// DM loss of the decoded memory, with gradients routed back through the
/// adjoint transform and the class index lists.
CoefficientLoss dm_loss_and_grad(const codec::SyntheticMemory& memory, const Tensor4& real,
                                 std::span<const int> real_labels, const net::NetParams& net);

struct DistillResult {
  codec::SyntheticMemory memory;
  std::vector<TracePoint> trace;
  std::vector<std::string> warnings;
};

/// Called after every logged iteration; used for progress lines.
using TraceCallback = std::function<void(const TracePoint&)>;

/// init_memory followed by SGD with momentum on the DM loss.
/// Throws DivergenceError on a non-finite loss or gradient.
DistillResult distill(const data::LabeledDataset& dataset, const stats::MaskSet& masks,
                      const codec::BudgetSpec& budget, const DistillConfig& config,
                      const TraceCallback& on_trace = {});

/// Pixel-space synthetic set stored at (H / scale, W / scale) and decoded by
/// nearest-neighbour upsampling. scale = 1 is the input-sized baseline.
struct SpatialSet {
  Tensor4 stored;
  std::vector<int> labels;
  std::size_t scale = 1;
  int class_count = 0;

  std::size_t stored_scalars() const noexcept { return stored.size(); }
  Tensor4 decode() const;
};

/// Box-average downsample; requires scale to divide H and W.
Tensor4 downsample(const Tensor4& x, std::size_t scale);
Tensor4 upsample_nearest(const Tensor4& x, std::size_t scale);

struct BaselineResult {
  SpatialSet set;
  std::vector<TracePoint> trace;
  std::vector<std::string> warnings;
};

/// ipc real images per class optimized directly in pixel space.
BaselineResult run_baseline_inputsized(const data::LabeledDataset& dataset, std::size_t ipc,
                                       const DistillConfig& config, const TraceCallback& on_trace = {});

/// ipc * scale^2 low-resolution images per class at the same scalar budget.
BaselineResult run_baseline_resize(const data::LabeledDataset& dataset, std::size_t ipc,
                                   std::size_t scale, const DistillConfig& config,
                                   const TraceCallback& on_trace = {});

}  // namespace fred::distill
