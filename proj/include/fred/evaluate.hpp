#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fred/data_io.hpp"
#include "fred/memory_codec.hpp"

namespace fred::eval {

enum class Model { ConvNet, LinearProbe };

std::string model_name(Model m);
Model parse_model(const std::string& text);

struct EvalConfig {
  Model model = Model::ConvNet;
  std::size_t runs = 5;
  std::size_t steps = 500;
  std::size_t batch = 64;
  double lr = 0.01;  // decayed 10x at the halfway step
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int depth = 3;
  int width = 32;
  double ridge = 1e-2;  // linear probe only
  std::uint64_t seed = 0;

  void validate() const;
};

struct EvalReport {
  std::string model;
  std::vector<double> accuracies;  // one per run, in [0, 1]
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over runs
  std::vector<double> loss_curve;  // training loss per step, averaged over runs
  double wall_ms = 0.0;

  /// JSON text with a fixed key order.
  std::string to_json() const;
};

/// Trains fresh models on the given set and scores them on the test set.
/// Throws InvalidInput for an empty training set or mismatched label spaces.
EvalReport evaluate_images(const Tensor4& images, std::span<const int> labels, int class_count,
                           const data::LabeledDataset& test, const EvalConfig& config);

EvalReport evaluate(const codec::SyntheticMemory& memory, const data::LabeledDataset& test,
                    const EvalConfig& config);

}  // namespace fred::eval
