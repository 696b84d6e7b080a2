// Command-line front end: analyze, distill, eval, ablate-masks, decode.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <optional>
#include <sstream>

#include "fred/data_io.hpp"
#include "fred/distill_engine.hpp"
#include "fred/errors.hpp"
#include "fred/evaluate.hpp"
#include "fred/memory_codec.hpp"
#include "fred/run_config.hpp"

namespace fs = std::filesystem;
using namespace fred;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kDivergence = 4 };

struct Splits {
  data::LabeledDataset train;
  data::LabeledDataset test;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string bytes_hash(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return hex64(h);
}

data::LabeledDataset split_class_major(const data::LabeledDataset& all, std::size_t skip, std::size_t take) {
  std::vector<std::size_t> idx;
  std::vector<std::size_t> seen(std::size_t(all.class_count), 0);
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& n = seen[std::size_t(all.labels[i])];
    if (n >= skip && n < skip + take) idx.push_back(i);
    ++n;
  }
  auto out = all.subset(idx);
  out.name = all.name;
  return out;
}

Splits load_data(const cli::RunConfig& cfg, bool need_train = true) {
  Splits s;
  if (cfg.dataset.empty()) throw ConfigError("no dataset given (use --dataset DIR or --dataset planted)");
  if (cfg.dataset == "planted") {
    auto all = data::gen_planted(cfg.planted_classes, cfg.planted_per_class + cfg.planted_test_per_class,
                                 cfg.planted_size, cfg.planted_size, cfg.planted_dims, cfg.planted_sigma,
                                 cfg.seed)
                   .set;
    s.train = split_class_major(all, 0, cfg.planted_per_class);
    s.test = split_class_major(all, cfg.planted_per_class, cfg.planted_test_per_class);
  } else {
    const fs::path dir = cfg.dataset;
    if (!fs::is_directory(dir)) throw InvalidInput("dataset directory " + dir.string() + " does not exist");
    if (need_train) s.train = data::load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    s.test = data::load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    s.train.name = s.test.name = dir.filename().string();
  }
  if (cfg.train_per_class > 0 && need_train) s.train = s.train.first_per_class(cfg.train_per_class);
  if (cfg.test_limit > 0 && cfg.test_limit < s.test.size()) {
    std::vector<std::size_t> idx(cfg.test_limit);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    s.test = s.test.subset(idx);
  }
  return s;
}

fs::path prepare_out(const cli::RunConfig& cfg) {
  const fs::path out = cfg.out;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw InvalidInput("cannot create output directory " + out.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw InvalidInput("cannot write " + path.string());
}

std::string provenance(const cli::RunConfig& cfg, const std::string& command, const std::string& dataset_hash) {
  std::string out = "# command=" + command + "\n# dataset_hash=" + dataset_hash + "\n";
  std::istringstream lines(cfg.to_text());
  for (std::string line; std::getline(lines, line);) out += "# " + line + "\n";
  return out;
}

nlohmann::ordered_json config_json(const cli::RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& key : cli::config_keys()) j[key] = cfg.get(key);
  return j;
}

stats::MaskSet make_masks(const data::LabeledDataset& train, const cli::RunConfig& cfg,
                          stats::MaskStrategy strategy, std::size_t& k) {
  const auto kind = cfg.transform_kind();
  const auto& s = train.images.shape();
  if (kind.tag == freq::TransformTag::DWT) {
    const std::size_t band = (s.h >> kind.dwt_levels) * (s.w >> kind.dwt_levels);
    if (cfg.is_explicit("k") && cfg.k != band)
      throw ConfigError("dwt keeps the level-" + std::to_string(kind.dwt_levels) + " LL band, so k must be " +
                        std::to_string(band));
    freq::validate_kind(s, kind);
    k = band;
    return stats::subband_mask_set(train.class_count, s.h, s.w, kind.dwt_levels);
  }
  const auto spectra = freq::forward(train.images, kind);
  return stats::build_mask_set(spectra, train.labels, train.class_count, {k, strategy, cfg.seed, cfg.pooled_eta});
}

std::string budget_table(const codec::BudgetSpec& b, const std::string& mask) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "transform: %s\nmask: %s\nk: %zu\ndecoded/class: %zu\nscalars/class: %zu of %zu\nincrement: x%g\n",
                b.transform.name().c_str(), mask.c_str(), b.k, b.decoded_per_class, b.stored_scalars_per_class(),
                b.budget_scalars_per_class(), b.increment());
  return buf;
}

distill::TraceCallback progress() {
  return [](const distill::TracePoint& t) {
    std::printf("iter %zu loss %.6g (%.0f ms)\n", t.iteration, t.loss, t.wall_ms);
    std::fflush(stdout);
  };
}

int cmd_analyze(const cli::RunConfig& cfg) {
  const auto data = load_data(cfg);
  const auto out = prepare_out(cfg);
  const auto& train = data.train;
  const auto spectra = freq::forward(train.images, cfg.transform_kind());
  const std::size_t h = train.images.shape().h, w = train.images.shape().w;
  const auto counts = train.class_counts();

  std::string summary = provenance(cfg, "analyze", train.hash_hex());
  summary += "class members";
  const std::vector<std::size_t> ks{16, 49, 64, 128};
  for (auto k : ks)
    if (k <= h * w) summary += " top" + std::to_string(k);
  summary += " top_dims\n";
  for (int c = 0; c < train.class_count; ++c) {
    summary += std::to_string(c) + " " + std::to_string(counts[std::size_t(c)]);
    stats::EvrMap evr;
    try {
      evr = stats::compute_evr(spectra, train.labels, c);
    } catch (const InsufficientData&) {
      summary += " DegenerateClass: fewer than 2 members\n";
      continue;
    }
    data::write_evr_grid(evr, out / ("evr_class" + std::to_string(c) + ".txt"));
    const auto cum = stats::cumulative_top_k(evr);
    char buf[32];
    for (auto k : ks)
      if (k <= h * w) {
        std::snprintf(buf, sizeof buf, " %.6f", cum[k - 1]);
        summary += buf;
      }
    if (evr.degenerate) {
      summary += " DegenerateClass: zero variance, uniform eta\n";
      continue;
    }
    summary += " ";
    const auto top = stats::top_k_indices(evr.eta, h, w, std::min<std::size_t>(16, h * w));
    // top_k_indices returns a sorted set; list it by descending eta instead.
    auto ranked = top;
    std::stable_sort(ranked.begin(), ranked.end(), [&](auto a, auto b) { return evr.eta[a] > evr.eta[b]; });
    for (std::size_t i = 0; i < ranked.size(); ++i)
      summary += (i ? ";" : "") + std::to_string(ranked[i] / w) + "," + std::to_string(ranked[i] % w);
    summary += "\n";
  }
  write_text(out / "summary.txt", summary);
  std::cout << summary;
  return kOk;
}

int cmd_distill(const cli::RunConfig& cfg) {
  const auto data = load_data(cfg);
  const auto out = prepare_out(cfg);
  const auto& train = data.train;
  const auto& s = train.images.shape();
  std::size_t k = cfg.k;
  const auto masks = make_masks(train, cfg, cfg.mask_strategy(), k);
  const auto budget = codec::plan_budget(cfg.ipc, s.h, s.w, s.c, k, cfg.transform_kind());
  std::cout << budget_table(budget, stats::strategy_name(masks.strategy)) << std::flush;

  auto result = distill::distill(train, masks, budget, cfg.distill_config(), progress());
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  const auto bytes = codec::serialize(result.memory);
  codec::save(result.memory, out / "memory.fred");
  distill::write_trace_csv(result.trace, out / "loss.csv");
  const auto decoded = codec::decode(result.memory);
  data::export_grid(decoded.images, out / (s.c == 3 ? "decoded.ppm" : "decoded.pgm"), budget.decoded_per_class);
  const std::string hash = bytes_hash(bytes);
  write_text(out / "run.txt", provenance(cfg, "distill", train.hash_hex()) + budget_table(budget, cfg.mask) +
                                  "memory_hash: " + hash + "\n");
  std::cout << "memory_hash: " << hash << "\n";
  return kOk;
}

int cmd_eval(const cli::RunConfig& cfg) {
  if (cfg.memory.empty()) throw ConfigError("eval needs --memory PATH");
  const auto memory = codec::load(cfg.memory);
  const auto data = load_data(cfg, false);
  const auto report = eval::evaluate(memory, data.test, cfg.eval_config());
  const auto out = prepare_out(cfg);

  nlohmann::ordered_json j;
  j["command"] = "eval";
  j["dataset_hash"] = data.test.hash_hex();
  j["memory"] = cfg.memory;
  j["config"] = config_json(cfg);
  j["report"] = nlohmann::ordered_json::parse(report.to_json());
  write_text(out / "eval.json", j.dump(2) + "\n");
  std::printf("accuracy: %.4f +- %.4f over %zu runs (%s)\n", report.mean, report.std, report.accuracies.size(),
              report.model.c_str());
  for (std::size_t i = 0; i < report.accuracies.size(); ++i) std::printf("run %zu: %.4f\n", i, report.accuracies[i]);
  return kOk;
}

int cmd_ablate(const cli::RunConfig& cfg) {
  const auto data = load_data(cfg);
  const auto out = prepare_out(cfg);
  const auto& train = data.train;
  const auto& s = train.images.shape();
  const auto dcfg = cfg.distill_config();
  const auto ecfg = cfg.eval_config();

  std::string table = provenance(cfg, "ablate-masks", train.hash_hex());
  table += "strategy k decoded/class scalars/class mean std note\n";
  std::optional<std::size_t> shared_scalars;
  for (auto strategy : cfg.strategy_list()) {
    const auto name = stats::strategy_name(strategy);
    try {
      std::size_t k = cfg.k;
      const auto masks = make_masks(train, cfg, strategy, k);
      const auto budget = codec::plan_budget(cfg.ipc, s.h, s.w, s.c, k, cfg.transform_kind());
      if (!shared_scalars) shared_scalars = budget.stored_scalars_per_class();
      if (*shared_scalars != budget.stored_scalars_per_class())
        throw InvalidBudget("arm budget differs from the first arm");
      const auto result = distill::distill(train, masks, budget, dcfg);
      const auto report = eval::evaluate(result.memory, data.test, ecfg);
      char row[256];
      std::snprintf(row, sizeof row, "%s %zu %zu %zu %.4f %.4f %s\n", name.c_str(), budget.k,
                    budget.decoded_per_class, budget.stored_scalars_per_class(), report.mean, report.std,
                    strategy == stats::MaskStrategy::HighPass ? "expected-low" : "-");
      table += row;
    } catch (const DivergenceError& e) {
      table += name + " - - - - - failed:divergence@" + std::to_string(e.iteration()) + "\n";
    } catch (const Error& e) {
      std::string what = e.what();
      std::replace(what.begin(), what.end(), ' ', '_');
      table += name + " - - - - - failed:" + what + "\n";
    }
    std::cout << table.substr(table.rfind('\n', table.size() - 2) + 1) << std::flush;
  }
  write_text(out / "ablation.txt", table);
  return kOk;
}

int cmd_decode(const cli::RunConfig& cfg) {
  if (cfg.memory.empty()) throw ConfigError("decode needs --memory PATH");
  const auto memory = codec::load(cfg.memory);
  const auto out = prepare_out(cfg);
  const auto decoded = codec::decode(memory);
  const auto path = out / (memory.budget.channels == 3 ? "decoded.ppm" : "decoded.pgm");
  data::export_grid(decoded.images, path, memory.budget.decoded_per_class);
  std::cout << "decoded " << decoded.images.shape().n << " images to " << path.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-domain dataset distillation"};
  app.require_subcommand(1);

  struct Flag {
    const char* name;
    const char* key;
    const char* help;
  };
  const std::vector<Flag> flags{
      {"--dataset", "dataset", "MNIST IDX directory or 'planted'"},
      {"--ipc", "ipc", "budget in full images per class"},
      {"--k", "k", "kept frequency dims per channel"},
      {"--transform", "transform", "dct, dft or dwt"},
      {"--mask", "mask", "evr, low, high, band, random or amplitude"},
      {"--iters", "iters", "distillation iterations"},
      {"--lr", "lr", "coefficient learning rate"},
      {"--momentum", "momentum", "SGD momentum"},
      {"--seed", "seed", "run seed (32-bit)"},
      {"--out", "out", "output directory"},
      {"--memory", "memory", "path of a .fred memory"},
  };
  std::vector<std::string> values(flags.size());
  std::vector<std::string> overrides;
  std::string config_file;

  std::vector<CLI::App*> subs;
  for (auto [name, help] : {std::pair{"analyze", "per-class EVR maps and top-k sums"},
                            std::pair{"distill", "build masks, distill and save a memory"},
                            std::pair{"eval", "train fresh networks on a decoded memory"},
                            std::pair{"ablate-masks", "distill and evaluate one arm per mask strategy"},
                            std::pair{"decode", "write the decoded images of a memory as a grid"}}) {
    auto* sub = app.add_subcommand(name, help);
    for (std::size_t i = 0; i < flags.size(); ++i) sub->add_option(flags[i].name, values[i], flags[i].help);
    sub->add_option("--config", config_file, "key=value config file");
    sub->add_option("--set", overrides, "extra key=value setting (repeatable)");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
      pairs.emplace_back(o.substr(0, eq), o.substr(eq + 1));
    }
    // Named flags are applied after --set so they win on conflicts.
    for (std::size_t i = 0; i < flags.size(); ++i)
      for (auto* sub : subs)
        if (sub->count(flags[i].name) > 0) pairs.emplace_back(flags[i].key, values[i]);
    const auto cfg = cli::resolve_config(config_file, pairs);

    if (subs[0]->parsed()) return cmd_analyze(cfg);
    if (subs[1]->parsed()) return cmd_distill(cfg);
    if (subs[2]->parsed()) return cmd_eval(cfg);
    if (subs[3]->parsed()) return cmd_ablate(cfg);
    return cmd_decode(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const InvalidBudget& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
}
