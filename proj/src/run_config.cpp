#include "fred/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <variant>

#include "fred/errors.hpp"

namespace fred::cli {

namespace {

using Member = std::variant<std::string RunConfig::*, std::size_t RunConfig::*, int RunConfig::*,
                            double RunConfig::*, bool RunConfig::*, std::uint32_t RunConfig::*>;

struct Entry {
  const char* key;
  Member member;
};

const std::vector<Entry>& schema() {
  static const std::vector<Entry> entries{
      {"dataset", &RunConfig::dataset},
      {"train_per_class", &RunConfig::train_per_class},
      {"test_limit", &RunConfig::test_limit},
      {"planted_classes", &RunConfig::planted_classes},
      {"planted_per_class", &RunConfig::planted_per_class},
      {"planted_test_per_class", &RunConfig::planted_test_per_class},
      {"planted_size", &RunConfig::planted_size},
      {"planted_dims", &RunConfig::planted_dims},
      {"planted_sigma", &RunConfig::planted_sigma},
      {"ipc", &RunConfig::ipc},
      {"k", &RunConfig::k},
      {"transform", &RunConfig::transform},
      {"dwt_levels", &RunConfig::dwt_levels},
      {"mask", &RunConfig::mask},
      {"pooled_eta", &RunConfig::pooled_eta},
      {"iters", &RunConfig::iters},
      {"lr", &RunConfig::lr},
      {"momentum", &RunConfig::momentum},
      {"seed", &RunConfig::seed},
      {"batch_real", &RunConfig::batch_real},
      {"batch_syn", &RunConfig::batch_syn},
      {"nets_per_step", &RunConfig::nets_per_step},
      {"log_every", &RunConfig::log_every},
      {"net_depth", &RunConfig::net_depth},
      {"net_width", &RunConfig::net_width},
      {"eval_model", &RunConfig::eval_model},
      {"eval_runs", &RunConfig::eval_runs},
      {"eval_steps", &RunConfig::eval_steps},
      {"eval_batch", &RunConfig::eval_batch},
      {"eval_lr", &RunConfig::eval_lr},
      {"eval_momentum", &RunConfig::eval_momentum},
      {"eval_weight_decay", &RunConfig::eval_weight_decay},
      {"eval_ridge", &RunConfig::eval_ridge},
      {"eval_depth", &RunConfig::eval_depth},
      {"eval_width", &RunConfig::eval_width},
      {"strategies", &RunConfig::strategies},
      {"memory", &RunConfig::memory},
      {"out", &RunConfig::out},
  };
  return entries;
}

const Entry& lookup(const std::string& key) {
  for (const auto& e : schema())
    if (key == e.key) return e;
  throw ConfigError("unknown config key '" + key + "'");
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("bad value '" + value + "' for " + key + " (expected " + expected + ")");
}

template <class T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, std::is_signed_v<T> ? "an integer" : "a non-negative integer");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) bad_value(key, value, "a finite number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  bad_value(key, value, "0, 1, true or false");
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : schema()) k.emplace_back(e.key);
    return k;
  }();
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& entry = lookup(key);
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          this->*member = value;
        } else if constexpr (std::is_same_v<T, bool>) {
          this->*member = parse_bool(key, value);
        } else if constexpr (std::is_same_v<T, double>) {
          this->*member = parse_double(key, value);
        } else {
          this->*member = parse_integer<T>(key, value);
        }
      },
      entry.member);
  // Catch bad enumerations at the layer that introduced them.
  if (key == "transform") transform_kind();
  if (key == "mask") mask_strategy();
  if (key == "strategies") strategy_list();
  if (key == "eval_model") eval::parse_model(eval_model);
  explicit_keys.insert(key);
}

std::string RunConfig::get(const std::string& key) const {
  const auto& entry = lookup(key);
  return std::visit(
      [&](auto member) -> std::string {
        using T = std::remove_cvref_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return this->*member;
        } else if constexpr (std::is_same_v<T, bool>) {
          return this->*member ? "1" : "0";
        } else if constexpr (std::is_same_v<T, double>) {
          return format_double(this->*member);
        } else {
          return std::to_string(this->*member);
        }
      },
      entry.member);
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& key : config_keys()) out += key + "=" + get(key) + "\n";
  return out;
}

freq::TransformKind RunConfig::transform_kind() const {
  auto kind = freq::TransformKind::parse(transform);
  if (kind.tag == freq::TransformTag::DWT) kind.dwt_levels = dwt_levels;
  return kind;
}

stats::MaskStrategy RunConfig::mask_strategy() const { return stats::parse_strategy(mask); }

std::vector<stats::MaskStrategy> RunConfig::strategy_list() const {
  std::vector<stats::MaskStrategy> out;
  for (const auto& name : split_list(strategies)) out.push_back(stats::parse_strategy(name));
  if (out.empty()) throw ConfigError("strategies must name at least one mask strategy");
  return out;
}

distill::DistillConfig RunConfig::distill_config() const {
  distill::DistillConfig c;
  c.iterations = iters;
  c.batch_real = batch_real;
  c.batch_syn = batch_syn;
  c.lr = lr;
  c.momentum = momentum;
  c.nets_per_step = nets_per_step;
  c.seed = seed;
  c.log_every = log_every;
  c.net_depth = net_depth;
  c.net_width = net_width;
  c.validate();
  return c;
}

eval::EvalConfig RunConfig::eval_config() const {
  eval::EvalConfig c;
  c.model = eval::parse_model(eval_model);
  c.runs = eval_runs;
  c.steps = eval_steps;
  c.batch = eval_batch;
  c.lr = eval_lr;
  c.momentum = eval_momentum;
  c.weight_decay = eval_weight_decay;
  c.ridge = eval_ridge;
  c.depth = eval_depth;
  c.width = eval_width;
  c.seed = seed;
  c.validate();
  return c;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path.filename().string() + ":" + std::to_string(number);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      lookup(key);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

RunConfig resolve_config(const std::filesystem::path& file,
                         const std::vector<std::pair<std::string, std::string>>& flags) {
  RunConfig cfg;
  if (!file.empty())
    for (const auto& [k, v] : read_config_file(file)) cfg.set(k, v);
  for (const auto& [k, v] : flags) cfg.set(k, v);
  return cfg;
}

}  // namespace fred::cli
