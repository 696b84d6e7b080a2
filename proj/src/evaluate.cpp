#include "fred/evaluate.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "fred/errors.hpp"
#include "fred/feature_net.hpp"
#include "fred/rng.hpp"

namespace fred::eval {

namespace {

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return double(hits) / double(truth.size());
}

struct RunResult {
  double accuracy = 0.0;
  std::vector<double> losses;
};

RunResult train_convnet(const Tensor4& images, std::span<const int> labels, int class_count,
                        const data::LabeledDataset& test, const EvalConfig& cfg, std::size_t run) {
  const auto spec = net::NetSpec::for_images(images.shape(), class_count, cfg.depth, cfg.width);
  auto params = net::init_params(spec, derive_seed(cfg.seed, run, 0));
  Rng rng(derive_seed(cfg.seed, run, 1));
  const std::size_t n = images.shape().n;
  const std::size_t batch = std::min(cfg.batch, n);
  std::vector<std::size_t> order(n);
  std::size_t cursor = n;
  std::vector<double> velocity(params.values.size(), 0.0);

  RunResult out;
  out.losses.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<std::size_t> idx;
    while (idx.size() < batch) {
      if (cursor == n) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(std::span(order));
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    std::vector<int> y;
    for (auto i : idx) y.push_back(labels[i]);
    const auto r = net::classify_forward_backward(params, images.gather(idx), y);
    out.losses.push_back(r.loss);
    const double lr = step < cfg.steps / 2 ? cfg.lr : 0.1 * cfg.lr;
    for (std::size_t q = 0; q < velocity.size(); ++q) {
      velocity[q] = cfg.momentum * velocity[q] + r.grads[q] + cfg.weight_decay * params.values[q];
      params.values[q] -= lr * velocity[q];
    }
  }
  out.accuracy = accuracy(net::predict(params, test.images), test.labels);
  return out;
}

// Ridge regression from raw pixels (plus a bias column) onto one-hot targets.
RunResult linear_probe(const Tensor4& images, std::span<const int> labels, int class_count,
                       const data::LabeledDataset& test, const EvalConfig& cfg) {
  using Dense = Eigen::MatrixXd;
  const auto n = Eigen::Index(images.shape().n), d = Eigen::Index(images.shape().instance());
  Dense x(n, d + 1);
  Dense y = Dense::Zero(n, class_count);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto src = images.instance(std::size_t(i));
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = src[std::size_t(j)];
    x(i, d) = 1.0;
    y(i, labels[std::size_t(i)]) = 1.0;
  }
  Dense gram = x.transpose() * x;
  gram.diagonal().array() += cfg.ridge;
  const Dense w = gram.ldlt().solve(x.transpose() * y);

  std::vector<int> predicted(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto src = test.images.instance(i);
    Eigen::RowVectorXd row(d + 1);
    for (Eigen::Index j = 0; j < d; ++j) row[j] = src[std::size_t(j)];
    row[d] = 1.0;
    Eigen::Index arg = 0;
    (row * w).maxCoeff(&arg);
    predicted[i] = int(arg);
  }
  return {accuracy(predicted, test.labels), {}};
}

}  // namespace

std::string model_name(Model m) { return m == Model::ConvNet ? "convnet" : "linear"; }

Model parse_model(const std::string& text) {
  if (text == "convnet") return Model::ConvNet;
  if (text == "linear") return Model::LinearProbe;
  throw ConfigError("unknown eval model '" + text + "' (expected convnet or linear)");
}

void EvalConfig::validate() const {
  if (runs == 0 || steps == 0 || batch == 0) throw ConfigError("eval runs, steps and batch must be positive");
  if (!(lr >= 0.0) || !(momentum >= 0.0 && momentum < 1.0) || !(weight_decay >= 0.0) || !(ridge > 0.0))
    throw ConfigError("eval lr, momentum, weight decay or ridge out of range");
  if (depth < 1 || width < 1) throw ConfigError("eval network depth and width must be positive");
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["runs"] = accuracies.size();
  j["accuracies"] = accuracies;
  j["mean"] = mean;
  j["std"] = std;
  j["wall_ms"] = wall_ms;
  j["loss_curve"] = loss_curve;
  return j.dump(2);
}

EvalReport evaluate_images(const Tensor4& images, std::span<const int> labels, int class_count,
                           const data::LabeledDataset& test, const EvalConfig& config) {
  config.validate();
  if (images.empty() || labels.empty()) throw InvalidInput("nothing to train on");
  if (labels.size() != images.shape().n) throw ShapeError("label count does not match image count");
  if (test.class_count != class_count)
    throw InvalidInput("test set has " + std::to_string(test.class_count) + " classes, training set " +
                       std::to_string(class_count));
  const auto& s = images.shape();
  const auto& t = test.images.shape();
  if (s.c != t.c || s.h != t.h || s.w != t.w) throw ShapeError("test images " + t.str() + " differ from " + s.str());
  for (int l : labels)
    if (l < 0 || l >= class_count) throw InvalidInput("label " + std::to_string(l) + " out of range");

  const auto start = std::chrono::steady_clock::now();
  EvalReport report;
  report.model = model_name(config.model);
  if (config.model == Model::LinearProbe) {
    report.accuracies.push_back(linear_probe(images, labels, class_count, test, config).accuracy);
  } else {
    report.loss_curve.assign(config.steps, 0.0);
    for (std::size_t r = 0; r < config.runs; ++r) {
      auto run = train_convnet(images, labels, class_count, test, config, r);
      report.accuracies.push_back(run.accuracy);
      for (std::size_t i = 0; i < config.steps; ++i) report.loss_curve[i] += run.losses[i] / double(config.runs);
    }
  }
  const double n = double(report.accuracies.size());
  for (double a : report.accuracies) report.mean += a / n;
  for (double a : report.accuracies) report.std += (a - report.mean) * (a - report.mean) / n;
  report.std = std::sqrt(report.std);
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

EvalReport evaluate(const codec::SyntheticMemory& memory, const data::LabeledDataset& test,
                    const EvalConfig& config) {
  if (memory.instances() == 0) throw InvalidInput("memory holds no instances");
  const auto decoded = codec::decode(memory);
  return evaluate_images(decoded.images, decoded.labels, int(memory.classes()), test, config);
}

}  // namespace fred::eval
