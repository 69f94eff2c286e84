#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "restcn/model.hpp"

namespace restcn {

/// Optimization settings. Defaults are the published protocol: SGD with
/// Nesterov momentum 0.9, lr 0.01 divided by 10 after a 10-epoch plateau of
/// the test loss, L1 1e-4 on convolution weights, batches of 128.
struct TrainConfig {
  double lr0 = 0.01;
  double momentum = 0.9;
  double l1_weight = 1e-4;
  int batch_size = 128;
  int plateau_patience = 10;
  double lr_decay_factor = 10.0;
  /// The test loss must drop below the best so far by more than this to
  /// count as an improvement.
  double plateau_tolerance = 1e-4;
  int max_epochs = 300;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PlateauState {
  double current_lr = 0.01;
  int epochs_since_improvement = 0;
  double best_loss = std::numeric_limits<double>::infinity();
};

/// Feeds one epoch's test loss to the plateau rule. The first observation
/// only sets the reference loss. Afterwards, once the loss has failed to
/// improve for more than `plateau_patience` consecutive epochs the
/// learning rate is divided by `lr_decay_factor` and the count restarts.
PlateauState plateau_schedule(PlateauState state, double test_loss, const TrainConfig& config);

/// lambda * sign(w), with sign(0) = 0.
template <typename Derived>
Eigen::VectorXd l1_subgradient(const Eigen::MatrixBase<Derived>& weights, double lambda) {
  return (lambda * weights.array().sign()).matrix();
}

/// Nesterov momentum in lookahead form:
///   v <- mu * v - lr * g
///   p <- p + mu * v - lr * g
void nesterov_step(Eigen::Ref<Eigen::VectorXd> params, Eigen::Ref<Eigen::VectorXd> velocity,
                   const Eigen::Ref<const Eigen::VectorXd>& grad, double lr, double momentum);

struct OptimizerState {
  std::vector<Eigen::VectorXd> velocity;  ///< one per tensors() entry
  PlateauState plateau;
};

OptimizerState make_optimizer_state(Parameters& params, const TrainConfig& config);

/// Adds the L1 subgradient to conv weights and applies one Nesterov step to
/// every tensor. `grads` must be congruent with `params`.
void apply_update(Parameters& params, Parameters& grads, OptimizerState& state, const TrainConfig& config);

struct Sample {
  Map input;
  int label = 0;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  Eigen::MatrixXi confusion;  ///< rows: true class, cols: predicted
};

/// Top-1 accuracy, mean cross-entropy and confusion matrix in infer mode.
EvalResult evaluate(const ResTcnModel& model, std::span<const Sample> samples);

struct BatchResult {
  double loss_sum = 0.0;
  int correct = 0;
  Parameters grads;  ///< summed over the batch
};

/// Train-mode forward/backward over the listed samples. Per-sample work may
/// run in parallel; the reduction order is fixed so the result does not
/// depend on the worker count.
BatchResult batch_gradients(const ResTcnModel& model, std::span<const Sample> samples,
                            std::span<const std::size_t> indices, std::uint64_t seed);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& metrics);

struct TrainOptions {
  /// When set, metrics.csv, best.rtcn and last.rtcn are written here.
  std::optional<std::filesystem::path> run_dir;
  /// Wall-clock seconds go to the metrics stream only when enabled; the
  /// column is 0 otherwise so identical runs produce identical files.
  bool record_time = false;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  ResTcnModel model;       ///< after the last epoch
  ResTcnModel best_model;  ///< lowest test loss
  int best_epoch = 0;      ///< 0 when no epoch ran
  std::vector<EpochMetrics> history;
};

TrainResult train(ResTcnModel model, std::span<const Sample> train_set, std::span<const Sample> test_set,
                  const TrainConfig& config, const TrainOptions& options = {});

}  // namespace restcn
