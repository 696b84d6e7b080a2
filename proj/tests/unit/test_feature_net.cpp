#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fred/errors.hpp"
#include "fred/feature_net.hpp"
#include "support/oracles.hpp"

using namespace fred;
using namespace fred::net;

namespace {

double sum_product(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_SUITE("feature_net") {
  TEST_CASE("shapes and layout") {
    auto spec = NetSpec::for_images({0, 1, 28, 28}, 10);
    CHECK(spec.feature_dim() == 32 * 3 * 3);
    auto p = zero_params(spec);
    CHECK(p.layout.size() == 5);
    std::size_t covered = 0;
    for (const auto& b : p.layout) {
      CHECK(b.offset == covered);
      covered += b.size;
    }
    CHECK(covered == p.values.size());
    CHECK(p.layout[0].size == 32 * 1 * 9);
    CHECK(p.layout[1].size == 32 * 32 * 9);
    CHECK(p.layout[3].size == 10 * 288);
    CHECK_THROWS_AS(NetSpec::for_images({0, 1, 4, 4}, 10, 3), ShapeError);
  }

  TEST_CASE("initialization") {
    NetSpec spec{2, 32, 3, 16, 16, 10};
    auto a = init_params(spec, 1);
    CHECK(a.values == init_params(spec, 1).values);
    CHECK(a.values != init_params(spec, 2).values);
    for (std::size_t l = 0; l < 2; ++l) {
      auto w = a.block(l);
      const double fan_in = double(l == 0 ? 3 * 9 : 32 * 9);
      double s2 = 0;
      for (double v : w) s2 += v * v;
      CHECK(s2 / double(w.size()) == doctest::Approx(2.0 / fan_in).epsilon(0.2));
    }
    for (double b : a.block(a.head_bias_block())) CHECK(b == 0.0);
  }

  TEST_CASE("zero input gives zero features") {
    NetSpec spec{3, 8, 1, 16, 16, 4};
    auto f = embed(init_params(spec, 3), Tensor4({2, 1, 16, 16}));
    CHECK(f.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("instances are embedded independently") {
    NetSpec spec{2, 8, 2, 12, 12, 3};
    auto p = init_params(spec, 4);
    auto x = oracle::random_tensor({3, 2, 12, 12}, 5);
    std::vector<std::size_t> dup{0, 1, 2, 0, 1, 2};
    auto f = embed(p, x);
    auto g = embed(p, x.gather(dup));
    CHECK(g.topRows(3) == f);
    CHECK(g.bottomRows(3) == f);
  }

  TEST_CASE("features stay finite on random inputs") {
    NetSpec spec{3, 8, 1, 16, 16, 10};
    auto p = init_params(spec, 6);
    Rng rng(7);
    for (int t = 0; t < 10; ++t) {
      auto x = oracle::random_tensor({100, 1, 16, 16}, 100 + t, std::pow(10.0, double(rng.index(7)) - 3.0));
      CHECK(embed(p, x).allFinite());
    }
  }

  TEST_CASE("embedding ignores positive input rescaling") {
    NetSpec spec{3, 16, 1, 16, 16, 10};
    auto p = init_params(spec, 8);
    auto x = oracle::random_tensor({4, 1, 16, 16}, 9);
    auto f = embed(p, x);
    for (double a : {0.5, 2.0}) {
      Tensor4 y = x;
      for (auto& v : y.data()) v *= a;
      // Only the norm epsilon breaks exact invariance.
      CHECK((embed(p, y) - f).cwiseAbs().maxCoeff() < 1e-4);
    }
  }

  TEST_CASE("input gradient matches central differences") {
    for (int depth = 1; depth <= 3; ++depth)
      for (int width : {8, 32}) {
        CAPTURE(depth);
        CAPTURE(width);
        NetSpec spec{depth, width, 2, 8, 8, 5};
        auto p = init_params(spec, std::uint64_t(depth * 100 + width));
        auto x = oracle::random_tensor({2, 2, 8, 8}, std::uint64_t(depth + width));
        auto up = random_matrix(2, Eigen::Index(spec.feature_dim()), 11);
        auto g = embed_vjp(p, x, up);
        Rng rng(12);
        for (int probe = 0; probe < 8; ++probe) {
          const std::size_t i = rng.index(x.size());
          const double fd = oracle::central_difference([&] { return sum_product(embed(p, x), up); },
                                                      x.data()[i], 1e-5);
          CHECK(oracle::rel_err(g.data()[i], fd, 1e-6) < 1e-5);
        }
      }
  }

  TEST_CASE("vector-Jacobian product is linear in the upstream") {
    NetSpec spec{2, 8, 1, 8, 8, 3};
    auto p = init_params(spec, 1);
    auto x = oracle::random_tensor({3, 1, 8, 8}, 2);
    const auto f = Eigen::Index(spec.feature_dim());
    auto u = random_matrix(3, f, 3), v = random_matrix(3, f, 4);
    CHECK(embed_vjp(p, x, Matrix::Zero(3, f)).squared_norm() == 0.0);
    auto gu = embed_vjp(p, x, u), gv = embed_vjp(p, x, v);
    auto gc = embed_vjp(p, x, 0.3 * u - 2.0 * v);
    for (std::size_t i = 0; i < gc.size(); ++i)
      CHECK(std::abs(gc.data()[i] - (0.3 * gu.data()[i] - 2.0 * gv.data()[i])) < 1e-9);
    CHECK_THROWS_AS(embed_vjp(p, x, Matrix::Zero(2, f)), ShapeError);
    CHECK_THROWS_AS(embed(p, Tensor4({1, 2, 8, 8})), ShapeError);
  }

  TEST_CASE("cross-entropy of zero parameters is ln C") {
    NetSpec spec{2, 8, 1, 8, 8, 7};
    auto p = zero_params(spec);
    auto x = oracle::random_tensor({5, 1, 8, 8}, 1);
    std::vector<int> y{0, 3, 6, 2, 2};
    auto r = classify_forward_backward(p, x, y);
    CHECK(r.loss == doctest::Approx(std::log(7.0)).epsilon(1e-12));
    CHECK(r.probabilities(2, 4) == doctest::Approx(1.0 / 7.0));
    CHECK_THROWS_AS(classify_forward_backward(p, x, std::vector<int>{0, 1, 2, 3, 7}), InvalidInput);
  }

  TEST_CASE("loss falls toward zero as the margin grows") {
    NetSpec spec{1, 4, 1, 4, 4, 3};
    auto p = zero_params(spec);
    Tensor4 x({1, 1, 4, 4});
    std::vector<int> y{1};
    double previous = 1e9;
    for (double margin : {0.0, 1.0, 2.0, 5.0, 10.0, 30.0}) {
      p.block(p.head_bias_block())[1] = margin;
      const double loss = classify_forward_backward(p, x, y).loss;
      CHECK(loss < previous);
      previous = loss;
    }
    CHECK(previous < 1e-12);
  }

  TEST_CASE("parameter gradients match central differences") {
    for (int depth = 1; depth <= 3; ++depth)
      for (int width : {8, 32}) {
        CAPTURE(depth);
        CAPTURE(width);
        NetSpec spec{depth, width, 1, 8, 8, 4};
        auto p = init_params(spec, std::uint64_t(7 * depth + width));
        auto x = oracle::random_tensor({3, 1, 8, 8}, std::uint64_t(depth * width));
        std::vector<int> y{0, 3, 1};
        auto r = classify_forward_backward(p, x, y);
        Rng rng{std::uint64_t(depth)};
        for (int probe = 0; probe < 8; ++probe) {
          // Cover every block: probes cycle through conv layers and the head.
          const auto& block = p.layout[std::size_t(probe) % p.layout.size()];
          const std::size_t i = block.offset + rng.index(block.size);
          const double fd = oracle::central_difference(
              [&] { return classify_forward_backward(p, x, y).loss; }, p.values[i], 1e-5);
          CHECK(oracle::rel_err(r.grads[i], fd, 1e-6) < 1e-5);
        }
      }
  }

  TEST_CASE("deterministic forward and backward") {
    NetSpec spec{3, 8, 1, 16, 16, 10};
    auto p = init_params(spec, 5);
    auto x = oracle::random_tensor({6, 1, 16, 16}, 6);
    std::vector<int> y{0, 1, 2, 3, 4, 5};
    CHECK(embed(p, x) == embed(p, x));
    CHECK(classify_forward_backward(p, x, y).grads == classify_forward_backward(p, x, y).grads);
    auto pred = predict(p, x);
    auto z = logits(p, x);
    for (std::size_t i = 0; i < 6; ++i) {
      Eigen::Index arg;
      z.row(Eigen::Index(i)).maxCoeff(&arg);
      CHECK(pred[i] == int(arg));
    }
  }
}
