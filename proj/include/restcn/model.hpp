#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "restcn/ops.hpp"
#include "restcn/temporal_map.hpp"

namespace restcn {

struct LayerSpec {
  int filters = 64;
  int length = 8;
  int stride = 1;

  bool operator==(const LayerSpec&) const = default;
};

/// Architecture and regularization settings of a Res-TCN.
struct ModelConfig {
  int input_dim = 150;
  int num_classes = 60;
  LayerSpec first_conv{64, 8, 1};
  std::vector<LayerSpec> residual_units = std::vector<LayerSpec>(8, LayerSpec{64, 8, 1});
  double dropout_rate = 0.5;
  double l1_weight = 1e-4;

  /// Uniform width and unit stride everywhere: every skip path is an
  /// identity and X_N decomposes exactly into X_1 plus residual terms.
  bool interpretable() const;

  /// Throws ConfigError on any invalid field.
  void validate() const;

  /// Number of convolution layers (first conv plus residual units).
  int layers() const { return 1 + static_cast<int>(residual_units.size()); }

  /// 64 filters of length 8, then 8 residual units of the same shape.
  static ModelConfig interpretable_profile(int input_dim = 150, int num_classes = 60);

  /// Widths 64 -> 128 -> 256 with stride-2 stage entries and projected skips.
  static ModelConfig capacity_profile(int input_dim = 150, int num_classes = 60);

  bool operator==(const ModelConfig&) const = default;
};

/// One pre-activation unit: X_l = skip(X_{l-1}) + branch * relu(X_{l-1}).
/// `projection` is present only where the unit changes width or stride.
struct ResidualUnit {
  ConvFilterBank<double> branch;
  std::optional<ConvFilterBank<double>> projection;
};

/// Every trainable tensor of a model. Also used, zero-initialized, as the
/// gradient container for the same model.
struct Parameters {
  ConvFilterBank<double> first;
  std::vector<ResidualUnit> units;
  Eigen::MatrixXd head_weights;  ///< channels x classes
  Eigen::VectorXd head_bias;

  Parameters zeros_like() const;
  std::size_t size() const;
};

enum class ParamKind { ConvWeight, ConvBias, HeadWeight, HeadBias };

/// A named flat view into one contiguous parameter array.
struct ParamTensor {
  std::string name;
  std::span<double> values;
  ParamKind kind;
};

/// Views of every tensor in a fixed layer order. Two Parameters of the same
/// model yield congruent lists.
std::vector<ParamTensor> tensors(Parameters& params);

struct ResTcnModel {
  ModelConfig config;
  Parameters params;

  /// Checks every parameter shape against the config chain.
  void check_consistency() const;
};

/// Draws weights from U(-a, a), a = sqrt(6 / fan_in); biases are zero.
ResTcnModel build_model(const ModelConfig& config, std::uint64_t seed);

enum class Mode { Train, Infer };

struct UnitCache {
  Map branch_input;  ///< relu(X_{l-1}), after dropout in train mode
  KeptMask kept;     ///< empty in infer mode
  Map residual;      ///< F_l = branch conv output
  std::optional<Map> skip;  ///< projected X_{l-1} when the unit has a projection
};

/// Activations recorded by forward(): layers holds X_0 ... X_N.
struct ActivationCache {
  Mode mode = Mode::Infer;
  std::vector<Map> layers;
  std::vector<UnitCache> units;
  Eigen::VectorXd pooled;
  Eigen::VectorXd logits;
};

/// Runs the model. `seed` drives dropout in train mode and is ignored
/// in infer mode.
ActivationCache forward(const ResTcnModel& model, const Map& x0, Mode mode = Mode::Infer,
                        std::uint64_t seed = 0);

/// [X_1, F_2, ..., F_N]; their elementwise sum is X_N.
std::vector<Map> decompose(const ActivationCache& cache);

struct ModelGradients {
  Parameters params;
  Map input;
};

/// Backpropagates an arbitrary dL/d(logits) through a cached forward pass.
ModelGradients backward_from_logits(const ResTcnModel& model, const ActivationCache& cache,
                                    const Eigen::VectorXd& logit_grad);

struct LossAndGradients {
  double loss = 0.0;
  ModelGradients grads;
};

/// Softmax cross-entropy against `label`, then backward_from_logits.
LossAndGradients backward(const ResTcnModel& model, const ActivationCache& cache, int label);

struct Prediction {
  int label = 0;
  Eigen::VectorXd probabilities;
};

/// Argmax of softmax(logits); ties go to the lowest class index.
Prediction predict_from_logits(const Eigen::VectorXd& logits);
Prediction predict(const ResTcnModel& model, const Map& x0);

/// Seed for the dropout mask of residual unit `unit`.
std::uint64_t unit_seed(std::uint64_t seed, std::size_t unit);

/// splitmix64 finalizer, used wherever independent seeds are derived.
std::uint64_t mix_seed(std::uint64_t value);

}  // namespace restcn
