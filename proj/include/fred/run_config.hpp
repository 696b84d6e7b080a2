#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fred/distill_engine.hpp"
#include "fred/evaluate.hpp"
#include "fred/frequency.hpp"
#include "fred/spectral_stats.hpp"

namespace fred::cli {

/// Every setting a command can read. Keys are listed in docs/config.md.
struct RunConfig {
  std::string dataset;
  std::size_t train_per_class = 0;  // 0 keeps every training image
  std::size_t test_limit = 0;       // 0 keeps every test image
  int planted_classes = 4;
  std::size_t planted_per_class = 100;
  std::size_t planted_test_per_class = 50;
  std::size_t planted_size = 16;
  std::size_t planted_dims = 8;
  double planted_sigma = 0.05;

  std::size_t ipc = 1;
  std::size_t k = 64;
  std::string transform = "dct";
  int dwt_levels = 1;
  std::string mask = "evr";
  bool pooled_eta = false;

  std::size_t iters = 200;
  double lr = 1.0;
  double momentum = 0.5;
  std::uint32_t seed = 0;
  std::size_t batch_real = 32;
  std::size_t batch_syn = 0;
  std::size_t nets_per_step = 1;
  std::size_t log_every = 10;
  int net_depth = 3;
  int net_width = 32;

  std::string eval_model = "convnet";
  std::size_t eval_runs = 5;
  std::size_t eval_steps = 300;
  std::size_t eval_batch = 64;
  double eval_lr = 0.01;
  double eval_momentum = 0.9;
  double eval_weight_decay = 5e-4;
  double eval_ridge = 1e-2;
  int eval_depth = 3;
  int eval_width = 32;

  std::string strategies = "evr,low,high,band,random,amplitude";
  std::string memory;
  std::string out = "out";

  /// Keys set by a config file or a flag rather than left at their default.
  std::set<std::string> explicit_keys;

  /// Sets one key from text. Throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  bool is_explicit(const std::string& key) const { return explicit_keys.contains(key); }

  /// "key=value" lines in schema order.
  std::string to_text() const;

  freq::TransformKind transform_kind() const;
  stats::MaskStrategy mask_strategy() const;
  std::vector<stats::MaskStrategy> strategy_list() const;
  distill::DistillConfig distill_config() const;
  eval::EvalConfig eval_config() const;
};

/// Keys in schema order.
const std::vector<std::string>& config_keys();

/// Reads key=value lines; blank lines and text after '#' are ignored.
/// Throws ConfigError naming the line for malformed lines or unknown keys.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

/// Defaults, then the file (if any), then flags, each later layer winning.
RunConfig resolve_config(const std::filesystem::path& file,
                         const std::vector<std::pair<std::string, std::string>>& flags);

}  // namespace fred::cli
