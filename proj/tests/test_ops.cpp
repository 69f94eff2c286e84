#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles/conv_direct.hpp"
#include "oracles/finite_difference.hpp"
#include "restcn/errors.hpp"
#include "restcn/ops.hpp"
#include "support.hpp"

using namespace restcn;

namespace {

ConvFilterBank<double> bank_from(const oracle::FilterTaps& w, const std::vector<double>& bias, int stride) {
  const int N = static_cast<int>(w.size()), f = static_cast<int>(w[0].size()), C = static_cast<int>(w[0][0].size());
  ConvFilterBank<double> bank(N, f, C, stride);
  for (int k = 0; k < N; ++k) {
    for (int tau = 0; tau < f; ++tau) {
      for (int c = 0; c < C; ++c) bank.weights(k, tau * C + c) = w[k][tau][c];
    }
    bank.bias(k) = bias[static_cast<std::size_t>(k)];
  }
  return bank;
}

oracle::FilterTaps random_taps(std::mt19937_64& rng, int N, int f, int C, bool integer) {
  std::uniform_int_distribution<int> ui(-4, 4);
  std::normal_distribution<double> n(0.0, 1.0);
  oracle::FilterTaps w(N, std::vector<std::vector<double>>(f, std::vector<double>(C)));
  for (auto& k : w)
    for (auto& tau : k)
      for (auto& v : tau) v = integer ? ui(rng) : n(rng);
  return w;
}

std::vector<bool> to_vector(const FrameMask& m) {
  std::vector<bool> v(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) v[static_cast<std::size_t>(i)] = m(i);
  return v;
}

Map vec(std::initializer_list<double> values) {
  Eigen::MatrixXd m(static_cast<Index>(values.size()), 1);
  Index i = 0;
  for (double v : values) m(i++, 0) = v;
  return Map(m);
}

}  // namespace

TEST_CASE("conv1d: unit filter scales the input") {
  ConvFilterBank<double> bank(1, 1, 1, 1);
  bank.weights(0, 0) = 2.0;
  const Map y = conv1d_forward(vec({1, 2, 3, 4}), bank);
  CHECK(y.data.col(0) == Eigen::Vector4d(2, 4, 6, 8));
}

TEST_CASE("conv1d: zero input and zero bias give zero output") {
  std::mt19937_64 rng(1);
  ConvFilterBank<double> bank(3, 5, 2, 1);
  bank.weights = testing::gaussian(rng, 3, 10);
  const Map y = conv1d_forward(Map::zeros(7, 2), bank);
  CHECK(y.data.isZero(0.0));
}

TEST_CASE("conv1d: T=5 C=2 f=3 matches direct summation") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd x = testing::integers(rng, 5, 2);
  const auto w = random_taps(rng, 1, 3, 2, true);
  const Map y = conv1d_forward(Map(x), bank_from(w, {0.0}, 1));
  CHECK(y.data == oracle::conv_direct(x, std::vector<bool>(5, true), w, {0.0}, 1));
}

TEST_CASE("conv1d: random shapes, strides, masks and even lengths match direct summation") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = 1 + static_cast<int>(rng() % 12), C = 1 + static_cast<int>(rng() % 4);
    const int N = 1 + static_cast<int>(rng() % 4), f = 1 + static_cast<int>(rng() % 6);
    const int stride = 1 + static_cast<int>(rng() % 3);
    const Eigen::MatrixXd x = testing::integers(rng, T, C);
    FrameMask mask = FrameMask::Constant(T, true);
    const int valid = 1 + static_cast<int>(rng() % static_cast<unsigned>(T));
    mask.tail(T - valid).setConstant(false);
    const auto w = random_taps(rng, N, f, C, true);
    std::vector<double> bias(static_cast<std::size_t>(N));
    for (auto& b : bias) b = static_cast<double>(static_cast<int>(rng() % 7) - 3);

    const Map y = conv1d_forward(Map(x, mask), bank_from(w, bias, stride));
    const Eigen::MatrixXd expected = oracle::conv_direct(x, to_vector(mask), w, bias, stride);
    REQUIRE(y.frames() == (T + stride - 1) / stride);
    CHECK(y.data == expected);
    for (Index t = 0; t < y.frames(); ++t) CHECK(y.mask(t) == mask(t * stride));
  }
}

TEST_CASE("conv1d: linear in the input") {
  std::mt19937_64 rng(4);
  ConvFilterBank<double> bank(3, 4, 3, 1);
  bank.weights = testing::gaussian(rng, 3, 12);
  const Map a(testing::gaussian(rng, 9, 3)), b(testing::gaussian(rng, 9, 3));
  const double alpha = 0.7, beta = -1.9;
  const Map mix(alpha * a.data + beta * b.data);
  const Eigen::MatrixXd lhs = conv1d_forward(mix, bank).data;
  const Eigen::MatrixXd rhs = alpha * conv1d_forward(a, bank).data + beta * conv1d_forward(b, bank).data;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("conv1d: errors") {
  ConvFilterBank<double> bank(2, 3, 4, 1);
  CHECK_THROWS_AS(conv1d_forward(Map::zeros(5, 3), bank), DimensionError);
  CHECK_THROWS_AS(conv1d_forward(Map(Eigen::MatrixXd(0, 4)), bank), DomainError);
  CHECK_THROWS_AS(ConvFilterBank<double>(0, 3, 4, 1), ConfigError);
  CHECK_THROWS_AS(ConvFilterBank<double>(1, 3, 4, 0), ConfigError);
  const Map x = Map::zeros(5, 4);
  CHECK_THROWS_AS(conv1d_backward(x, bank, Map::zeros(4, 2)), DimensionError);
}

TEST_CASE("conv1d_backward: zero upstream gives zero gradients") {
  std::mt19937_64 rng(5);
  ConvFilterBank<double> bank(3, 3, 2, 1);
  bank.weights = testing::gaussian(rng, 3, 6);
  const Map x(testing::gaussian(rng, 6, 2));
  const auto g = conv1d_backward(x, bank, Map::zeros(6, 3));
  CHECK(g.weights.isZero(0.0));
  CHECK(g.bias.isZero(0.0));
  CHECK(g.input.data.isZero(0.0));
}

TEST_CASE("conv1d_backward: f=1 scalar chain rule") {
  ConvFilterBank<double> bank(1, 1, 1, 1);
  bank.weights(0, 0) = 0.5;
  const Map x = vec({1, -2, 3});
  const Map up = vec({4, 5, 6});
  const auto g = conv1d_backward(x, bank, up);
  CHECK(g.weights(0, 0) == doctest::Approx(1 * 4 - 2 * 5 + 3 * 6));
  CHECK(g.bias(0) == doctest::Approx(15));
  CHECK(g.input.data.col(0) == Eigen::Vector3d(2, 2.5, 3));
}

TEST_CASE("conv1d_backward: bias gradient sums upstream over valid frames") {
  std::mt19937_64 rng(6);
  ConvFilterBank<double> bank(2, 3, 2, 1);
  FrameMask mask(5);
  mask << true, true, true, false, false;
  const Map x(testing::gaussian(rng, 5, 2), mask);
  const Map up(testing::gaussian(rng, 5, 2), mask);
  const auto g = conv1d_backward(x, bank, up);
  CHECK((g.bias - up.data.topRows(3).colwise().sum().transpose()).norm() < 1e-12);
}

TEST_CASE("conv1d_backward: T=6 C=2 N=3 f=3 matches finite differences") {
  std::mt19937_64 rng(7);
  Map x(testing::gaussian(rng, 6, 2));
  ConvFilterBank<double> bank(3, 3, 2, 1);
  bank.weights = testing::gaussian(rng, 3, 6);
  bank.bias = testing::gaussian(rng, 3, 1);
  const Eigen::MatrixXd r = testing::gaussian(rng, 6, 3);
  auto loss = [&] { return (r.array() * conv1d_forward(x, bank).data.array()).sum(); };
  const auto g = conv1d_backward(x, bank, Map(r));
  for (Index i = 0; i < bank.weights.size(); ++i) {
    CHECK(oracle::rel_error(g.weights.data()[i], oracle::central_difference(loss, bank.weights.data()[i])) < 1e-4);
  }
  for (Index i = 0; i < bank.bias.size(); ++i) {
    CHECK(oracle::rel_error(g.bias(i), oracle::central_difference(loss, bank.bias(i))) < 1e-4);
  }
  for (Index i = 0; i < x.data.size(); ++i) {
    CHECK(oracle::rel_error(g.input.data.data()[i], oracle::central_difference(loss, x.data.data()[i])) < 1e-4);
  }
}

TEST_CASE("relu") {
  CHECK(relu(vec({-1, 0, 2})).data.col(0) == Eigen::Vector3d(0, 0, 2));
  std::mt19937_64 rng(8);
  const Map pos(testing::gaussian(rng, 5, 3).cwiseAbs());
  CHECK(relu(pos).data == pos.data);
  const Map x(testing::gaussian(rng, 7, 4));
  const Map neg(-x.data);
  CHECK(relu(x).data - relu(neg).data == x.data);
  FrameMask mask(3);
  mask << true, false, true;
  CHECK((relu(Map(Eigen::MatrixXd::Ones(3, 1), mask)).mask == mask).all());
}

TEST_CASE("merge_add") {
  std::mt19937_64 rng(9);
  const Map a(testing::gaussian(rng, 6, 3)), b(testing::gaussian(rng, 6, 3)), c(testing::gaussian(rng, 6, 3));
  CHECK(merge_add(a, Map::zeros(6, 3)).data == a.data);
  CHECK(merge_add(a, b).data == merge_add(b, a).data);
  const Map s = merge_add(a, b);
  for (Index i = 0; i < s.data.size(); ++i) CHECK(s.data.data()[i] == a.data.data()[i] + b.data.data()[i]);
  const double assoc = (merge_add(merge_add(a, b), c).data - merge_add(a, merge_add(b, c)).data).cwiseAbs().maxCoeff();
  CHECK(assoc < 1e-12);
  CHECK_THROWS_AS(merge_add(a, Map::zeros(5, 3)), DimensionError);
  FrameMask m = FrameMask::Constant(6, true);
  m(5) = false;
  CHECK_THROWS_AS(merge_add(a, Map(b.data, m)), DimensionError);
}

TEST_CASE("global_average_pool") {
  Eigen::MatrixXd constant(4, 2);
  constant.col(0).setConstant(1.5);
  constant.col(1).setConstant(-2.0);
  CHECK(global_average_pool(Map(constant)) == Eigen::Vector2d(1.5, -2.0));
  CHECK(global_average_pool(vec({1, 3}))(0) == 2.0);
  FrameMask mask(4);
  mask << true, true, false, false;
  CHECK(global_average_pool(Map(vec({1, 2, 3, 4}).data, mask))(0) == 1.5);

  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd x = testing::integers(rng, 9, 3, -50, 50);
    FrameMask m(9);
    for (Index t = 0; t < 9; ++t) m(t) = (rng() & 1) != 0;
    m(static_cast<Index>(rng() % 9)) = true;
    const Eigen::VectorXd pooled = global_average_pool(Map(x, m));
    for (Index c = 0; c < 3; ++c) {
      double sum = 0.0;
      int n = 0;
      for (Index t = 0; t < 9; ++t) {
        if (m(t)) {
          sum += x(t, c);
          ++n;
        }
      }
      CHECK(pooled(c) == sum / n);
    }
  }
  CHECK_THROWS_AS(global_average_pool(Map(Eigen::MatrixXd::Ones(3, 1), FrameMask::Constant(3, false))), DomainError);
}

TEST_CASE("softmax_cross_entropy") {
  const auto u = softmax_cross_entropy<double>(Eigen::Vector4d::Zero(), 2);
  CHECK(u.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(u.grad.isApprox(Eigen::Vector4d(0.25, 0.25, -0.75, 0.25)));

  const auto big = softmax_cross_entropy<double>(Eigen::Vector2d(1000, 0), 0);
  CHECK(std::isfinite(big.loss));
  CHECK(big.loss < 1e-12);
  CHECK(big.grad.allFinite());

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd z = testing::gaussian(rng, 5, 1);
    const int label = static_cast<int>(rng() % 5);
    const auto r = softmax_cross_entropy<double>(z, label);
    CHECK(std::abs(r.grad.sum()) < 1e-9);
    auto loss = [&] { return softmax_cross_entropy<double>(z, label).loss; };
    for (Index k = 0; k < 5; ++k) CHECK(std::abs(r.grad(k) - oracle::central_difference(loss, z(k))) < 1e-6);
  }
  CHECK_THROWS_AS(softmax_cross_entropy<double>(Eigen::Vector2d::Zero(), 2), DomainError);
  CHECK_THROWS_AS(softmax_cross_entropy<double>(Eigen::Vector2d::Zero(), -1), DomainError);
  CHECK_THROWS_AS(softmax_cross_entropy<double>(Eigen::VectorXd::Zero(1), 0), DomainError);
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(12);
  const Map x(testing::gaussian(rng, 8, 5));
  CHECK(dropout(x, 0.0, 1, true).output.data == x.data);
  CHECK(dropout(x, 0.5, 1, false).output.data == x.data);

  const Map ones(Eigen::MatrixXd::Ones(100, 100));
  const auto d = dropout(ones, 0.5, 42, true);
  CHECK(std::abs(d.output.data.mean() - 1.0) < 0.05);
  for (Index i = 0; i < d.output.data.size(); ++i) {
    const double v = d.output.data.data()[i];
    CHECK((v == 0.0 || v == 2.0));
    CHECK((v == 2.0) == d.kept.data()[i]);
  }
  CHECK(dropout(x, 0.3, 9, true).output.data == dropout(x, 0.3, 9, true).output.data);
  CHECK(dropout(x, 0.3, 9, true).output.data != dropout(x, 0.3, 10, true).output.data);
  CHECK_THROWS_AS(dropout(x, 1.0, 1, true), DomainError);
  CHECK_THROWS_AS(dropout(x, -0.1, 1, true), DomainError);
}

TEST_CASE("backward ops match finite differences over random cases") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const int T = 1 + static_cast<int>(rng() % 7), C = 1 + static_cast<int>(rng() % 3);
    FrameMask mask = FrameMask::Constant(T, true);
    mask.tail(static_cast<Index>(rng() % static_cast<unsigned>(T))).setConstant(false);
    Map x(testing::gaussian(rng, T, C), mask);
    const Eigen::MatrixXd r = testing::gaussian(rng, T, C);

    // relu, away from the kink
    for (Index i = 0; i < x.data.size(); ++i) {
      if (std::abs(x.data.data()[i]) < 1e-2) x.data.data()[i] = 0.5;
    }
    auto relu_loss = [&] { return (r.array() * relu(x).data.array()).sum(); };
    const Map gr = relu_backward(x, Map(r, mask));
    for (Index i = 0; i < x.data.size(); ++i) {
      CHECK(oracle::rel_error(gr.data.data()[i], oracle::central_difference(relu_loss, x.data.data()[i])) < 1e-4);
    }

    const Eigen::VectorXd rc = testing::gaussian(rng, C, 1);
    auto gap_loss = [&] { return rc.dot(global_average_pool(x)); };
    const Map gg = global_average_pool_backward<double>(mask, rc);
    for (Index i = 0; i < x.data.size(); ++i) {
      CHECK(oracle::rel_error(gg.data.data()[i], oracle::central_difference(gap_loss, x.data.data()[i])) < 1e-4);
    }

    const double rate = 0.1 * static_cast<double>(rng() % 9);
    const std::uint64_t seed = rng();
    auto drop_loss = [&] { return (r.array() * dropout(x, rate, seed, true).output.data.array()).sum(); };
    const Map gd = dropout_backward(Map(r, mask), dropout(x, rate, seed, true).kept, rate);
    for (Index i = 0; i < x.data.size(); ++i) {
      CHECK(oracle::rel_error(gd.data.data()[i], oracle::central_difference(drop_loss, x.data.data()[i])) < 1e-4);
    }
  }
}
