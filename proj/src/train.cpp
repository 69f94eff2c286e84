#include "restcn/train.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <numeric>
#include <random>

#include "restcn/checkpoint.hpp"
#include "restcn/parallel.hpp"

namespace restcn {

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(l1_weight >= 0.0)) throw ConfigError("l1_weight must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (plateau_patience < 0) throw ConfigError("plateau_patience must be >= 0");
  if (!(lr_decay_factor > 1.0)) throw ConfigError("lr_decay_factor must be > 1");
  if (!(plateau_tolerance >= 0.0)) throw ConfigError("plateau_tolerance must be >= 0");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
}

PlateauState plateau_schedule(PlateauState state, double test_loss, const TrainConfig& config) {
  if (test_loss < state.best_loss - config.plateau_tolerance) {
    state.best_loss = test_loss;
    state.epochs_since_improvement = 0;
    return state;
  }
  ++state.epochs_since_improvement;
  if (state.epochs_since_improvement > config.plateau_patience) {
    state.current_lr /= config.lr_decay_factor;
    state.epochs_since_improvement = 0;
  }
  return state;
}

void nesterov_step(Eigen::Ref<Eigen::VectorXd> params, Eigen::Ref<Eigen::VectorXd> velocity,
                   const Eigen::Ref<const Eigen::VectorXd>& grad, double lr, double momentum) {
  if (params.size() != velocity.size() || params.size() != grad.size()) {
    throw DimensionError("nesterov_step: params, velocity and grad sizes differ");
  }
  velocity = momentum * velocity - lr * grad;
  params += momentum * velocity - lr * grad;
}

OptimizerState make_optimizer_state(Parameters& params, const TrainConfig& config) {
  OptimizerState state;
  for (const auto& t : tensors(params)) state.velocity.push_back(Eigen::VectorXd::Zero(t.values.size()));
  state.plateau.current_lr = config.lr0;
  return state;
}

namespace {

using VecMap = Eigen::Map<Eigen::VectorXd>;

VecMap as_vector(std::span<double> values) { return VecMap(values.data(), static_cast<Index>(values.size())); }

void accumulate(Parameters& into, Parameters& add) {
  auto dst = tensors(into);
  auto src = tensors(add);
  for (std::size_t i = 0; i < dst.size(); ++i) as_vector(dst[i].values) += as_vector(src[i].values);
}

void scale(Parameters& params, double factor) {
  for (auto& t : tensors(params)) as_vector(t.values) *= factor;
}

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  return mix_seed(mix_seed(seed) ^ mix_seed((epoch << 32) | index));
}

constexpr std::size_t kReductionChunk = 8;

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

void apply_update(Parameters& params, Parameters& grads, OptimizerState& state, const TrainConfig& config) {
  auto p = tensors(params);
  auto g = tensors(grads);
  if (p.size() != g.size() || p.size() != state.velocity.size()) {
    throw DimensionError("apply_update: parameter, gradient and velocity lists differ");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].values.size() != g[i].values.size()) throw DimensionError("apply_update: tensor " + p[i].name);
    VecMap pv = as_vector(p[i].values);
    VecMap gv = as_vector(g[i].values);
    if (p[i].kind == ParamKind::ConvWeight && config.l1_weight > 0.0) gv += l1_subgradient(pv, config.l1_weight);
    nesterov_step(pv, state.velocity[i], gv, state.plateau.current_lr, config.momentum);
  }
}

BatchResult batch_gradients(const ResTcnModel& model, std::span<const Sample> samples,
                            std::span<const std::size_t> indices, std::uint64_t seed) {
  const std::size_t chunks = (indices.size() + kReductionChunk - 1) / kReductionChunk;
  std::vector<BatchResult> partial(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    BatchResult& acc = partial[c];
    acc.grads = model.params.zeros_like();
    const std::size_t end = std::min(indices.size(), (c + 1) * kReductionChunk);
    for (std::size_t j = c * kReductionChunk; j < end; ++j) {
      const Sample& sample = samples[indices[j]];
      const auto cache = forward(model, sample.input, Mode::Train, mix_seed(seed ^ mix_seed(indices[j])));
      auto result = backward(model, cache, sample.label);
      acc.loss_sum += result.loss;
      if (predict_from_logits(cache.logits).label == sample.label) ++acc.correct;
      accumulate(acc.grads, result.grads.params);
    }
  });
  BatchResult total;
  total.grads = model.params.zeros_like();
  for (auto& p : partial) {
    total.loss_sum += p.loss_sum;
    total.correct += p.correct;
    accumulate(total.grads, p.grads);
  }
  return total;
}

EvalResult evaluate(const ResTcnModel& model, std::span<const Sample> samples) {
  const int classes = model.config.num_classes;
  std::vector<double> losses(samples.size());
  std::vector<int> predicted(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    const auto cache = forward(model, samples[i].input, Mode::Infer);
    losses[i] = softmax_cross_entropy<double>(cache.logits, samples[i].label).loss;
    predicted[i] = predict_from_logits(cache.logits).label;
  });
  EvalResult out;
  out.confusion = Eigen::MatrixXi::Zero(classes, classes);
  if (samples.empty()) return out;
  int correct = 0;
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    loss_sum += losses[i];
    correct += predicted[i] == samples[i].label;
    out.confusion(samples[i].label, predicted[i]) += 1;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  out.mean_loss = loss_sum / static_cast<double>(samples.size());
  return out;
}

std::string metrics_csv_header() { return "epoch,train_loss,train_acc,test_loss,test_acc,lr,seconds"; }

std::string metrics_csv_row(const EpochMetrics& m) {
  return std::to_string(m.epoch) + "," + format_double(m.train_loss) + "," + format_double(m.train_acc) + "," +
         format_double(m.test_loss) + "," + format_double(m.test_acc) + "," + format_double(m.lr) + "," +
         format_double(m.seconds);
}

TrainResult train(ResTcnModel model, std::span<const Sample> train_set, std::span<const Sample> test_set,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (train_set.empty()) throw ConfigError("train: empty training split");
  if (test_set.empty()) throw ConfigError("train: empty test split");
  for (const auto* split : {&train_set, &test_set}) {
    for (const auto& s : *split) {
      if (s.label < 0 || s.label >= model.config.num_classes) {
        throw DataError("train: label " + std::to_string(s.label) + " outside the model's classes");
      }
    }
  }

  std::ofstream metrics_file;
  auto write_checkpoint = [&](const ResTcnModel& m, const char* name) {
    if (options.run_dir) save_checkpoint(m, *options.run_dir / name);
  };
  if (options.run_dir) {
    std::filesystem::create_directories(*options.run_dir);
    metrics_file.open(*options.run_dir / "metrics.csv", std::ios::trunc);
    if (!metrics_file) throw IoError("cannot write " + (*options.run_dir / "metrics.csv").string());
    metrics_file << metrics_csv_header() << '\n' << std::flush;
  }

  TrainResult result{model, model, 0, {}};
  if (config.max_epochs == 0) {
    write_checkpoint(model, "best.rtcn");
    write_checkpoint(model, "last.rtcn");
    return result;
  }

  OptimizerState state = make_optimizer_state(model.params, config);
  // The untrained model's test loss is the plateau rule's reference point.
  state.plateau = plateau_schedule(state.plateau, evaluate(model, test_set).mean_loss, config);
  double best_test_loss = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::mt19937_64 shuffle_rng(mix_seed(config.seed ^ mix_seed(static_cast<std::uint64_t>(epoch))));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = state.plateau.current_lr;
    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      auto step = batch_gradients(model, train_set, batch, sample_seed(config.seed, epoch, begin));
      loss_sum += step.loss_sum;
      correct += step.correct;
      scale(step.grads, 1.0 / static_cast<double>(batch.size()));
      apply_update(model.params, step.grads, state, config);
    }
    m.train_loss = loss_sum / static_cast<double>(train_set.size());
    m.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());

    const EvalResult test = evaluate(model, test_set);
    m.test_loss = test.mean_loss;
    m.test_acc = test.accuracy;
    state.plateau = plateau_schedule(state.plateau, test.mean_loss, config);
    if (options.record_time) {
      m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }

    if (test.mean_loss < best_test_loss) {
      best_test_loss = test.mean_loss;
      result.best_model = model;
      result.best_epoch = epoch;
      write_checkpoint(model, "best.rtcn");
    }
    write_checkpoint(model, "last.rtcn");
    if (metrics_file.is_open()) metrics_file << metrics_csv_row(m) << '\n' << std::flush;
    result.history.push_back(m);
    if (options.on_epoch) options.on_epoch(m);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace restcn
