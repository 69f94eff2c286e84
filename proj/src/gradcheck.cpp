#include "restcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "restcn/model.hpp"
#include "restcn/ops.hpp"

namespace restcn {

namespace {

class Checker {
 public:
  Checker(const GradcheckOptions& options) : options_(options) {}

  double central_difference(double& x, const std::function<double()>& loss) const {
    const double saved = x;
    x = saved + options_.step;
    const double plus = loss();
    x = saved - options_.step;
    const double minus = loss();
    x = saved;
    return (plus - minus) / (2.0 * options_.step);
  }

  void compare(const std::string& name, double analytic, double numeric, const std::string& where) {
    GradcheckEntry& e = entries_[name];
    e.name = name;
    ++e.checked;
    const double err = relative_error(analytic, numeric);
    if (err > e.max_rel_error || e.worst.empty()) {
      if (err >= e.max_rel_error) {
        e.max_rel_error = err;
        e.worst = where;
      }
    }
  }

  template <typename Derived>
  void compare_all(const std::string& name, Eigen::PlainObjectBase<Derived>& values,
                   const Eigen::PlainObjectBase<Derived>& analytic, const std::function<double()>& loss,
                   const std::string& where) {
    for (Index i = 0; i < values.size(); ++i) {
      const double numeric = central_difference(values.data()[i], loss);
      compare(name, analytic.data()[i], numeric, where + "[" + std::to_string(i) + "]");
    }
  }

  GradcheckReport report() const {
    GradcheckReport r;
    r.tolerance = options_.tolerance;
    for (const auto& [name, entry] : entries_) r.entries.push_back(entry);
    return r;
  }

  const GradcheckOptions& options() const { return options_; }

 private:
  GradcheckOptions options_;
  std::map<std::string, GradcheckEntry> entries_;
};

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Values kept away from the relu kink so a finite-difference step never
// crosses it.
Eigen::MatrixXd kink_free(std::mt19937_64& rng, Index rows, Index cols) {
  Eigen::MatrixXd m = random_matrix(rng, rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    if (std::abs(m.data()[i]) < 1e-2) m.data()[i] = std::copysign(0.5, m.data()[i] + 1e-300);
  }
  return m;
}

FrameMask random_prefix_mask(std::mt19937_64& rng, Index frames) {
  FrameMask mask = FrameMask::Constant(frames, true);
  if (frames > 1 && std::bernoulli_distribution(0.5)(rng)) {
    const Index valid = std::uniform_int_distribution<Index>(1, frames - 1)(rng);
    mask.tail(frames - valid).setConstant(false);
  }
  return mask;
}

int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double weighted_sum(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& values) {
  return (weights.array() * values.array()).sum();
}

void check_conv(Checker& c, std::mt19937_64& rng) {
  const int frames = pick(rng, 1, 8), channels = pick(rng, 1, 3), filters = pick(rng, 1, 3);
  const int length = pick(rng, 1, 4), stride = pick(rng, 1, 2);
  Map input(random_matrix(rng, frames, channels), random_prefix_mask(rng, frames));
  ConvFilterBank<double> bank(filters, length, channels, stride);
  bank.weights = random_matrix(rng, bank.weights.rows(), bank.weights.cols());
  bank.bias = random_matrix(rng, filters, 1);
  const Map probe = conv1d_forward(input, bank);
  const Eigen::MatrixXd r = random_matrix(rng, probe.frames(), probe.channels());
  auto loss = [&] { return weighted_sum(r, conv1d_forward(input, bank).data); };
  auto grads = conv1d_backward(input, bank, Map(r, probe.mask));
  if (c.options().perturb_backward) grads.weights(0, 0) += 1e-3;
  c.compare_all("conv1d.weights", bank.weights, grads.weights, loss, "W");
  c.compare_all("conv1d.bias", bank.bias, grads.bias, loss, "b");
  c.compare_all("conv1d.input", input.data, grads.input.data, loss, "x");
}

void check_relu(Checker& c, std::mt19937_64& rng) {
  const int frames = pick(rng, 1, 8), channels = pick(rng, 1, 4);
  Map input(kink_free(rng, frames, channels));
  const Eigen::MatrixXd r = random_matrix(rng, frames, channels);
  auto loss = [&] { return weighted_sum(r, relu(input).data); };
  const Map grad = relu_backward(input, Map(r));
  c.compare_all("relu.input", input.data, grad.data, loss, "x");
}

void check_merge(Checker& c, std::mt19937_64& rng) {
  const int frames = pick(rng, 1, 8), channels = pick(rng, 1, 4);
  Map a(random_matrix(rng, frames, channels)), b(random_matrix(rng, frames, channels));
  const Eigen::MatrixXd r = random_matrix(rng, frames, channels);
  auto loss = [&] { return weighted_sum(r, merge_add(a, b).data); };
  c.compare_all("merge_add.a", a.data, r, loss, "a");
  c.compare_all("merge_add.b", b.data, r, loss, "b");
}

void check_gap(Checker& c, std::mt19937_64& rng) {
  const int frames = pick(rng, 1, 8), channels = pick(rng, 1, 4);
  Map input(random_matrix(rng, frames, channels), random_prefix_mask(rng, frames));
  const Eigen::VectorXd r = random_matrix(rng, channels, 1);
  auto loss = [&] { return r.dot(global_average_pool(input)); };
  const Map grad = global_average_pool_backward<double>(input.mask, r);
  c.compare_all("global_average_pool.input", input.data, grad.data, loss, "x");
}

void check_softmax(Checker& c, std::mt19937_64& rng) {
  const int classes = pick(rng, 2, 6);
  // Unit-scale logits: deep saturation leaves gradients below the
  // finite-difference noise floor (eps * loss / step).
  Eigen::VectorXd logits = random_matrix(rng, classes, 1);
  const int label = pick(rng, 0, classes - 1);
  auto loss = [&] { return softmax_cross_entropy<double>(logits, label).loss; };
  const Eigen::VectorXd grad = softmax_cross_entropy<double>(logits, label).grad;
  c.compare_all("softmax_cross_entropy.logits", logits, grad, loss, "z");
}

void check_dropout(Checker& c, std::mt19937_64& rng) {
  const int frames = pick(rng, 1, 8), channels = pick(rng, 1, 4);
  const double rate = std::uniform_real_distribution<double>(0.0, 0.9)(rng);
  const std::uint64_t seed = rng();
  Map input(random_matrix(rng, frames, channels));
  const Eigen::MatrixXd r = random_matrix(rng, frames, channels);
  auto loss = [&] { return weighted_sum(r, dropout(input, rate, seed, true).output.data); };
  const auto forward_pass = dropout(input, rate, seed, true);
  const Map grad = dropout_backward(Map(r), forward_pass.kept, rate);
  c.compare_all("dropout.input", input.data, grad.data, loss, "x");
}

std::string group_of(const std::string& tensor) {
  if (tensor.starts_with("conv1")) return "model.conv1";
  if (tensor.starts_with("head")) return "model.head";
  if (tensor.find("projection") != std::string::npos) return "model.projection";
  return "model.residual";
}

void check_model(Checker& c, std::mt19937_64& rng, bool projected) {
  const GradcheckOptions& o = c.options();
  ModelConfig config;
  config.input_dim = o.input_dim;
  config.num_classes = o.classes;
  config.first_conv = {o.filters, o.filter_length, 1};
  config.residual_units.assign(static_cast<std::size_t>(o.units), LayerSpec{o.filters, o.filter_length, 1});
  if (projected) config.residual_units.push_back({o.filters + 1, o.filter_length, 2});
  config.dropout_rate = 0.3;
  ResTcnModel model = build_model(config, rng());
  for (auto& t : tensors(model.params)) {
    if (t.kind == ParamKind::ConvBias || t.kind == ParamKind::HeadBias) {
      for (double& v : t.values) v = std::normal_distribution<double>(0.0, 0.5)(rng);
    }
  }
  Map x0(random_matrix(rng, o.frames, o.input_dim), random_prefix_mask(rng, o.frames));
  const int label = pick(rng, 0, o.classes - 1);
  const std::uint64_t seed = rng();

  auto loss = [&] {
    return softmax_cross_entropy<double>(forward(model, x0, Mode::Train, seed).logits, label).loss;
  };
  auto analytic = backward(model, forward(model, x0, Mode::Train, seed), label);
  if (o.perturb_backward) analytic.grads.params.first.weights(0, 0) += 1e-3;

  auto params = tensors(model.params);
  auto grads = tensors(analytic.grads.params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < params[i].values.size(); ++k) {
      const double numeric = c.central_difference(params[i].values[k], loss);
      c.compare(group_of(params[i].name), grads[i].values[k], numeric, params[i].name + "[" + std::to_string(k) + "]");
    }
  }
  for (Index i = 0; i < x0.data.size(); ++i) {
    const double numeric = c.central_difference(x0.data.data()[i], loss);
    c.compare("model.input", analytic.grads.input.data.data()[i], numeric, "x0[" + std::to_string(i) + "]");
  }
}

}  // namespace

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(),
                     [this](const GradcheckEntry& e) { return e.max_rel_error < tolerance; });
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-7});
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  Checker checker(options);
  std::mt19937_64 rng(options.seed);
  for (int i = 0; i < options.cases; ++i) {
    check_conv(checker, rng);
    check_relu(checker, rng);
    check_merge(checker, rng);
    check_gap(checker, rng);
    check_softmax(checker, rng);
    check_dropout(checker, rng);
  }
  for (int i = 0; i < options.model_cases; ++i) check_model(checker, rng, i % 2 == 1);
  return checker.report();
}

}  // namespace restcn
