#include "doctest.h"

#include <cmath>
#include <algorithm>
#include <cstdlib>
#include <numeric>

#include "restcn/checkpoint.hpp"
#include "restcn/errors.hpp"
#include "restcn/synth.hpp"
#include "restcn/train.hpp"
#include "support.hpp"

using namespace restcn;

namespace {

ModelConfig tiny(int classes, int filters = 4, int units = 1) {
  ModelConfig c;
  c.input_dim = kFeatureDim;
  c.num_classes = classes;
  c.first_conv = {filters, 3, 1};
  c.residual_units.assign(static_cast<std::size_t>(units), LayerSpec{filters, 3, 1});
  return c;
}

std::vector<Sample> synth_samples(int classes, int per_class, std::uint64_t seed) {
  SynthOptions o;
  o.min_frames = 30;
  o.max_frames = 40;
  const auto data = synth_generate(classes, per_class, seed, o);
  std::vector<Sample> out;
  for (const auto& s : data.sequences) out.push_back({to_temporal_map(s), s.info.label});
  return out;
}

double penalized_loss(const ResTcnModel& m, std::span<const Sample> batch, double lambda) {
  double loss = evaluate(m, batch).mean_loss;
  loss += lambda * m.params.first.weights.cwiseAbs().sum();
  for (const auto& u : m.params.units) loss += lambda * u.branch.weights.cwiseAbs().sum();
  return loss;
}

struct EnvGuard {
  explicit EnvGuard(const char* value) { ::setenv("RESTCN_THREADS", value, 1); }
  ~EnvGuard() { ::unsetenv("RESTCN_THREADS"); }
};

}  // namespace

TEST_CASE("l1_subgradient") {
  CHECK(l1_subgradient(Eigen::VectorXd::Zero(3), 1e-4).isZero(0.0));
  const Eigen::VectorXd g = l1_subgradient(Eigen::Vector2d(-2, 3), 1e-4);
  CHECK(g(0) == -1e-4);
  CHECK(g(1) == 1e-4);
}

TEST_CASE("nesterov_step") {
  SUBCASE("momentum 0 is plain SGD") {
    Eigen::VectorXd p(3), v = Eigen::VectorXd::Zero(3), g(3);
    p << 1, 2, 3;
    g << 0.5, -1, 2;
    nesterov_step(p, v, g, 0.1, 0.0);
    CHECK((p - Eigen::Vector3d(0.95, 2.1, 2.8)).norm() < 1e-15);
  }
  SUBCASE("zero gradient: velocity decays geometrically") {
    Eigen::VectorXd p(1), v(1), g = Eigen::VectorXd::Zero(1);
    p << 0.0;
    v << 1.0;
    for (int i = 1; i <= 30; ++i) {
      nesterov_step(p, v, g, 0.1, 0.9);
      CHECK(v(0) == doctest::Approx(std::pow(0.9, i)).epsilon(1e-12));
    }
    // p approaches 0.9 * 0.9 / (1 - 0.9) + ... = sum_{i>=1} 0.9^{i+1}
    CHECK(p(0) == doctest::Approx(0.81 / 0.1).epsilon(0.05));
  }
  SUBCASE("quadratic bowl converges within 200 steps") {
    Eigen::VectorXd p(1), v = Eigen::VectorXd::Zero(1);
    p << 1.0;
    int steps = 0;
    while (std::abs(p(0)) >= 1e-3 && steps < 200) {
      nesterov_step(p, v, p, 0.1, 0.9);  // grad of p^2/2 is p
      ++steps;
    }
    CHECK(std::abs(p(0)) < 1e-3);
    CHECK(steps <= 200);
  }
  SUBCASE("lookahead form tracks the classic Nesterov iteration") {
    // Classic: g = f'(q + mu v); v <- mu v - lr g; q <- q + v. The
    // reformulated parameter equals q + mu v.
    const double a = 3.0, lr = 0.05, mu = 0.9;
    double q = 1.0, vq = 0.0;
    Eigen::VectorXd p(1), v = Eigen::VectorXd::Zero(1), g(1);
    p << 1.0;
    for (int i = 0; i < 100; ++i) {
      const double grad = a * (q + mu * vq);
      vq = mu * vq - lr * grad;
      q += vq;
      g << a * p(0);
      nesterov_step(p, v, g, lr, mu);
      CHECK(std::abs(p(0) - (q + mu * vq)) < 1e-12);
    }
  }
  SUBCASE("size mismatch") {
    Eigen::VectorXd p(2), v(3), g(2);
    CHECK_THROWS_AS(nesterov_step(p, v, g, 0.1, 0.9), DimensionError);
  }
}

TEST_CASE("plateau_schedule") {
  TrainConfig cfg;
  SUBCASE("strictly decreasing loss keeps the rate") {
    PlateauState s{cfg.lr0};
    for (int e = 0; e < 40; ++e) {
      s = plateau_schedule(s, 10.0 - 0.01 * e, cfg);
      CHECK(s.current_lr == 0.01);
    }
  }
  SUBCASE("constant loss: 0.01 -> 0.001 at epoch 11 -> 1e-4 at epoch 22") {
    PlateauState s{cfg.lr0};
    s = plateau_schedule(s, 1.0, cfg);  // epoch 0: reference
    for (int epoch = 1; epoch <= 30; ++epoch) {
      s = plateau_schedule(s, 1.0, cfg);
      const double expected = epoch < 11 ? 0.01 : epoch < 22 ? 0.001 : 1e-4;
      CHECK_MESSAGE(s.current_lr == expected, "epoch " << epoch);
    }
  }
  SUBCASE("improvements below the tolerance count as a plateau") {
    PlateauState s{cfg.lr0};
    // every epoch beats the reference, but never by more than 1e-4
    s = plateau_schedule(s, 1.0, cfg);
    for (int e = 1; e <= 11; ++e) s = plateau_schedule(s, 1.0 - 0.5e-4 - 1e-6 * (e % 2), cfg);
    CHECK(s.current_lr == 0.001);
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.lr0 = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("apply_update: L1 only touches convolution weights") {
  ResTcnModel m = build_model(tiny(3), 1);
  const ResTcnModel before = m;
  Parameters zero = m.params.zeros_like();
  TrainConfig cfg;
  cfg.momentum = 0.0;
  OptimizerState st = make_optimizer_state(m.params, cfg);
  apply_update(m.params, zero, st, cfg);
  CHECK(m.params.head_weights == before.params.head_weights);
  CHECK(m.params.head_bias == before.params.head_bias);
  CHECK(m.params.first.bias == before.params.first.bias);
  const Eigen::MatrixXd expected =
      before.params.first.weights - cfg.lr0 * cfg.l1_weight * before.params.first.weights.array().sign().matrix();
  CHECK((m.params.first.weights - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("evaluate") {
  const auto samples = synth_samples(4, 5, 3);
  ResTcnModel m = build_model(tiny(4), 2);
  m.params.head_weights.setZero();
  m.params.head_bias << 0, 0, 0, 1;
  const EvalResult r = evaluate(m, samples);
  CHECK(r.accuracy == doctest::Approx(0.25));
  const EvalResult again = evaluate(m, samples);
  CHECK(again.mean_loss == r.mean_loss);
  CHECK(again.confusion == r.confusion);

  const ResTcnModel random = build_model(tiny(4), 5);
  const EvalResult rr = evaluate(random, samples);
  for (int c = 0; c < 4; ++c) CHECK(rr.confusion.row(c).sum() == 5);
  CHECK(rr.confusion.sum() == 20);
  CHECK(rr.accuracy == doctest::Approx(rr.confusion.trace() / 20.0));
}

TEST_CASE("batch_gradients does not depend on the worker count") {
  const auto samples = synth_samples(3, 6, 4);
  const ResTcnModel m = build_model(tiny(3), 3);
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  BatchResult one, three;
  {
    EnvGuard g("1");
    one = batch_gradients(m, samples, idx, 17);
  }
  {
    EnvGuard g("3");
    three = batch_gradients(m, samples, idx, 17);
  }
  CHECK(one.loss_sum == three.loss_sum);
  auto a = tensors(one.grads), b = tensors(three.grads);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::equal(a[i].values.begin(), a[i].values.end(), b[i].values.begin()));
}

TEST_CASE("train: zero epochs returns the initial model") {
  const auto samples = synth_samples(2, 3, 1);
  TrainConfig cfg;
  cfg.max_epochs = 0;
  const ResTcnModel m = build_model(tiny(2), 9);
  const TrainResult r = train(m, samples, samples, cfg);
  CHECK(encode_checkpoint(r.model) == encode_checkpoint(m));
  CHECK(r.history.empty());
}

TEST_CASE("train: empty split is a config error") {
  const auto samples = synth_samples(2, 3, 1);
  const ResTcnModel m = build_model(tiny(2), 9);
  CHECK_THROWS_AS(train(m, {}, samples, TrainConfig{}), ConfigError);
  CHECK_THROWS_AS(train(m, samples, {}, TrainConfig{}), ConfigError);
}

TEST_CASE("train: memorizes a single sample") {
  const auto samples = synth_samples(2, 1, 2);
  const std::vector<Sample> one{samples[0]};
  TrainConfig cfg;
  cfg.lr0 = 1e-3;
  cfg.l1_weight = 0;
  cfg.max_epochs = 400;
  ModelConfig mc = tiny(2);
  mc.dropout_rate = 0.0;
  const TrainResult r = train(build_model(mc, 4), one, one, cfg);
  CHECK(r.history.back().train_loss < 1e-2);
}

TEST_CASE("train: L1-penalized loss decreases on a fixed batch") {
  const auto batch = synth_samples(3, 4, 6);
  TrainConfig cfg;
  cfg.lr0 = 1e-3;
  cfg.max_epochs = 50;
  cfg.batch_size = static_cast<int>(batch.size());
  ModelConfig mc = tiny(3);
  mc.dropout_rate = 0.0;
  const ResTcnModel start = build_model(mc, 8);
  const TrainResult r = train(start, batch, batch, cfg);
  CHECK(penalized_loss(r.model, batch, cfg.l1_weight) < penalized_loss(start, batch, cfg.l1_weight));
}

TEST_CASE("train: loss on a fixed batch decreases over the first 10 steps at lr 1e-3") {
  const auto batch = synth_samples(4, 4, 10);
  TrainConfig cfg;
  cfg.lr0 = 1e-3;
  cfg.max_epochs = 10;
  cfg.batch_size = static_cast<int>(batch.size());
  const ResTcnModel start = build_model(tiny(4, 8, 2), 12);
  const TrainResult r = train(start, batch, batch, cfg);
  CHECK(evaluate(r.model, batch).mean_loss < evaluate(start, batch).mean_loss);
}

TEST_CASE("train: lr column follows the plateau rule and never increases") {
  const auto samples = synth_samples(2, 6, 7);
  TrainConfig cfg;
  cfg.lr0 = 0.05;
  cfg.max_epochs = 25;
  cfg.plateau_patience = 2;
  cfg.batch_size = 4;
  const ResTcnModel start = build_model(tiny(2), 1);
  const TrainResult r = train(start, samples, samples, cfg);
  PlateauState s{cfg.lr0};
  s = plateau_schedule(s, evaluate(start, samples).mean_loss, cfg);
  double previous = cfg.lr0;
  bool decayed = false;
  for (const auto& m : r.history) {
    CHECK(m.lr == s.current_lr);
    CHECK(m.lr <= previous);
    decayed |= m.lr < previous;
    previous = m.lr;
    s = plateau_schedule(s, m.test_loss, cfg);
    CHECK(m.train_acc >= 0.0);
    CHECK(m.train_acc <= 1.0);
  }
  CHECK(decayed);
}

TEST_CASE("train: identical seeds give identical files") {
  const auto samples = synth_samples(3, 4, 5);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.batch_size = 5;
  cfg.seed = 42;
  testing::TempDir a("train_a"), b("train_b");
  train(build_model(tiny(3), 42), samples, samples, cfg, {a.path()});
  {
    EnvGuard g("2");
    train(build_model(tiny(3), 42), samples, samples, cfg, {b.path()});
  }
  for (const char* f : {"metrics.csv", "best.rtcn", "last.rtcn"}) {
    CHECK_MESSAGE(testing::slurp(a / f) == testing::slurp(b / f), f);
  }
  const std::string csv = testing::slurp(a / "metrics.csv");
  CHECK(csv.rfind("epoch,train_loss,train_acc,test_loss,test_acc,lr,seconds\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}
