#include "restcn/model.hpp"

#include <cmath>
#include <random>

namespace restcn {

bool ModelConfig::interpretable() const {
  if (first_conv.stride != 1) return false;
  for (const auto& unit : residual_units) {
    if (unit.filters != first_conv.filters || unit.stride != 1) return false;
  }
  return true;
}

namespace {

void validate_layer(const LayerSpec& spec, const std::string& where) {
  if (spec.filters < 1 || spec.length < 1 || spec.stride < 1) {
    throw ConfigError(where + ": filters, length and stride must be >= 1");
  }
}

bool needs_projection(int in_channels, const LayerSpec& unit) {
  return unit.filters != in_channels || unit.stride != 1;
}

}  // namespace

void ModelConfig::validate() const {
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  validate_layer(first_conv, "first_conv");
  for (std::size_t i = 0; i < residual_units.size(); ++i) {
    validate_layer(residual_units[i], "residual unit " + std::to_string(i));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (!(l1_weight >= 0.0)) throw ConfigError("l1_weight must be >= 0");
}

ModelConfig ModelConfig::interpretable_profile(int input_dim, int num_classes) {
  ModelConfig config;
  config.input_dim = input_dim;
  config.num_classes = num_classes;
  return config;
}

ModelConfig ModelConfig::capacity_profile(int input_dim, int num_classes) {
  ModelConfig config;
  config.input_dim = input_dim;
  config.num_classes = num_classes;
  config.first_conv = {64, 8, 1};
  config.residual_units.clear();
  for (int width : {64, 128, 256}) {
    for (int i = 0; i < 3; ++i) {
      const int stride = (i == 0 && width != 64) ? 2 : 1;
      config.residual_units.push_back({width, 8, stride});
    }
  }
  return config;
}

Parameters Parameters::zeros_like() const {
  Parameters out;
  out.first = first;
  out.first.weights.setZero();
  out.first.bias.setZero();
  out.units = units;
  for (auto& unit : out.units) {
    unit.branch.weights.setZero();
    unit.branch.bias.setZero();
    if (unit.projection) {
      unit.projection->weights.setZero();
      unit.projection->bias.setZero();
    }
  }
  out.head_weights = Eigen::MatrixXd::Zero(head_weights.rows(), head_weights.cols());
  out.head_bias = Eigen::VectorXd::Zero(head_bias.size());
  return out;
}

std::size_t Parameters::size() const {
  std::size_t total = 0;
  for (const auto& t : tensors(const_cast<Parameters&>(*this))) total += t.values.size();
  return total;
}

std::vector<ParamTensor> tensors(Parameters& params) {
  std::vector<ParamTensor> out;
  auto add_bank = [&out](const std::string& name, ConvFilterBank<double>& bank) {
    out.push_back({name + ".weights", {bank.weights.data(), static_cast<std::size_t>(bank.weights.size())},
                   ParamKind::ConvWeight});
    out.push_back(
        {name + ".bias", {bank.bias.data(), static_cast<std::size_t>(bank.bias.size())}, ParamKind::ConvBias});
  };
  add_bank("conv1", params.first);
  for (std::size_t i = 0; i < params.units.size(); ++i) {
    const std::string name = "unit" + std::to_string(i + 2);
    add_bank(name + ".branch", params.units[i].branch);
    if (params.units[i].projection) add_bank(name + ".projection", *params.units[i].projection);
  }
  out.push_back({"head.weights",
                 {params.head_weights.data(), static_cast<std::size_t>(params.head_weights.size())},
                 ParamKind::HeadWeight});
  out.push_back({"head.bias", {params.head_bias.data(), static_cast<std::size_t>(params.head_bias.size())},
                 ParamKind::HeadBias});
  return out;
}

void ResTcnModel::check_consistency() const {
  config.validate();
  auto check_bank = [](const ConvFilterBank<double>& bank, const LayerSpec& spec, Index in_channels,
                       const std::string& where) {
    if (bank.filters() != spec.filters || bank.length != spec.length || bank.stride != spec.stride ||
        bank.in_channels() != in_channels || bank.bias.size() != spec.filters ||
        bank.weights.cols() != spec.length * in_channels) {
      throw ConfigError(where + ": parameter shape does not match config");
    }
  };
  check_bank(params.first, config.first_conv, config.input_dim, "conv1");
  if (params.units.size() != config.residual_units.size()) {
    throw ConfigError("residual unit count does not match config");
  }
  int channels = config.first_conv.filters;
  for (std::size_t i = 0; i < params.units.size(); ++i) {
    const auto& spec = config.residual_units[i];
    const std::string where = "unit" + std::to_string(i + 2);
    check_bank(params.units[i].branch, spec, channels, where);
    if (needs_projection(channels, spec) != params.units[i].projection.has_value()) {
      throw ConfigError(where + ": skip projection presence does not match config");
    }
    if (params.units[i].projection) {
      check_bank(*params.units[i].projection, {spec.filters, 1, spec.stride}, channels, where + ".projection");
    }
    channels = spec.filters;
  }
  if (params.head_weights.rows() != channels || params.head_weights.cols() != config.num_classes ||
      params.head_bias.size() != config.num_classes) {
    throw ConfigError("head shape does not match config");
  }
}

ResTcnModel build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  auto fill_uniform = [&rng](auto& matrix, double fan_in) {
    const double a = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-a, a);
    for (Index i = 0; i < matrix.size(); ++i) matrix.data()[i] = dist(rng);
  };
  auto make_bank = [&](const LayerSpec& spec, int in_channels) {
    ConvFilterBank<double> bank(spec.filters, spec.length, in_channels, spec.stride);
    fill_uniform(bank.weights, static_cast<double>(spec.length) * in_channels);
    return bank;
  };

  ResTcnModel model;
  model.config = config;
  model.params.first = make_bank(config.first_conv, config.input_dim);
  int channels = config.first_conv.filters;
  for (const auto& spec : config.residual_units) {
    ResidualUnit unit{make_bank(spec, channels), std::nullopt};
    if (needs_projection(channels, spec)) unit.projection = make_bank({spec.filters, 1, spec.stride}, channels);
    model.params.units.push_back(std::move(unit));
    channels = spec.filters;
  }
  model.params.head_weights = Eigen::MatrixXd(channels, config.num_classes);
  fill_uniform(model.params.head_weights, channels);
  model.params.head_bias = Eigen::VectorXd::Zero(config.num_classes);
  return model;
}

std::uint64_t mix_seed(std::uint64_t value) {
  value += 0x9e3779b97f4a7c15ULL;
  value = (value ^ (value >> 30)) * 0xbf58476d1ce4e5b9ULL;
  value = (value ^ (value >> 27)) * 0x94d049bb133111ebULL;
  return value ^ (value >> 31);
}

std::uint64_t unit_seed(std::uint64_t seed, std::size_t unit) { return mix_seed(seed ^ mix_seed(unit + 1)); }

ActivationCache forward(const ResTcnModel& model, const Map& x0, Mode mode, std::uint64_t seed) {
  if (x0.channels() != model.config.input_dim) {
    throw DimensionError("forward: input has " + std::to_string(x0.channels()) + " channels, model expects " +
                         std::to_string(model.config.input_dim));
  }
  ActivationCache cache;
  cache.mode = mode;
  cache.layers.reserve(model.params.units.size() + 2);
  cache.units.reserve(model.params.units.size());
  cache.layers.push_back(x0);
  // X_1 = W_1 * X_0, no nonlinearity.
  cache.layers.push_back(conv1d_forward(x0, model.params.first));

  const bool training = mode == Mode::Train;
  for (std::size_t i = 0; i < model.params.units.size(); ++i) {
    const ResidualUnit& unit = model.params.units[i];
    const Map& previous = cache.layers.back();
    UnitCache uc;
    auto dropped = dropout(relu(previous), model.config.dropout_rate, unit_seed(seed, i), training);
    uc.branch_input = std::move(dropped.output);
    if (training) uc.kept = std::move(dropped.kept);
    uc.residual = conv1d_forward(uc.branch_input, unit.branch);
    Map next;
    if (unit.projection) {
      uc.skip = conv1d_forward(previous, *unit.projection);
      next = merge_add(*uc.skip, uc.residual);
    } else {
      next = merge_add(previous, uc.residual);
    }
    cache.units.push_back(std::move(uc));
    cache.layers.push_back(std::move(next));
  }
  cache.pooled = global_average_pool(cache.layers.back());
  cache.logits = model.params.head_weights.transpose() * cache.pooled + model.params.head_bias;
  return cache;
}

std::vector<Map> decompose(const ActivationCache& cache) {
  if (cache.mode != Mode::Infer) {
    throw ContractError("decompose: cache was recorded in train mode; dropout breaks the decomposition");
  }
  if (cache.layers.size() < 2) throw ContractError("decompose: incomplete cache");
  std::vector<Map> terms;
  terms.reserve(cache.units.size() + 1);
  terms.push_back(cache.layers[1]);
  for (const auto& unit : cache.units) {
    if (unit.skip) throw ContractError("decompose: unit with projected skip path has no additive decomposition");
    terms.push_back(unit.residual);
  }
  return terms;
}

ModelGradients backward_from_logits(const ResTcnModel& model, const ActivationCache& cache,
                                    const Eigen::VectorXd& logit_grad) {
  const auto& params = model.params;
  if (cache.layers.size() != params.units.size() + 2 || cache.units.size() != params.units.size()) {
    throw ContractError("backward: cache does not belong to this model");
  }
  if (logit_grad.size() != model.config.num_classes || cache.pooled.size() != params.head_weights.rows()) {
    throw ContractError("backward: logit gradient or pooled size mismatch");
  }
  const bool training = cache.mode == Mode::Train;

  ModelGradients out;
  out.params = params.zeros_like();
  out.params.head_weights.noalias() = cache.pooled * logit_grad.transpose();
  out.params.head_bias = logit_grad;
  const Eigen::VectorXd pooled_grad = params.head_weights * logit_grad;

  Map grad = global_average_pool_backward<double>(cache.layers.back().mask, pooled_grad);
  for (std::size_t n = params.units.size(); n-- > 0;) {
    const ResidualUnit& unit = params.units[n];
    const UnitCache& uc = cache.units[n];
    const Map& previous = cache.layers[n + 1];

    auto branch = conv1d_backward(uc.branch_input, unit.branch, grad);
    out.params.units[n].branch.weights = std::move(branch.weights);
    out.params.units[n].branch.bias = std::move(branch.bias);
    Map through_branch = training ? dropout_backward(branch.input, uc.kept, model.config.dropout_rate)
                                  : std::move(branch.input);
    through_branch = relu_backward(previous, through_branch);

    Map through_skip;
    if (unit.projection) {
      auto skip = conv1d_backward(previous, *unit.projection, grad);
      out.params.units[n].projection->weights = std::move(skip.weights);
      out.params.units[n].projection->bias = std::move(skip.bias);
      through_skip = std::move(skip.input);
    } else {
      through_skip = std::move(grad);
    }
    grad = merge_add(through_skip, through_branch);
  }

  auto first = conv1d_backward(cache.layers[0], params.first, grad);
  out.params.first.weights = std::move(first.weights);
  out.params.first.bias = std::move(first.bias);
  out.input = std::move(first.input);
  return out;
}

LossAndGradients backward(const ResTcnModel& model, const ActivationCache& cache, int label) {
  auto ce = softmax_cross_entropy<double>(cache.logits, label);
  return {ce.loss, backward_from_logits(model, cache, ce.grad)};
}

Prediction predict_from_logits(const Eigen::VectorXd& logits) {
  Prediction out;
  out.probabilities = softmax(logits);
  Index best = 0;
  // maxCoeff's tie order is unspecified; scan explicitly.
  for (Index k = 1; k < logits.size(); ++k) {
    if (logits(k) > logits(best)) best = k;
  }
  out.label = static_cast<int>(best);
  return out;
}

Prediction predict(const ResTcnModel& model, const Map& x0) {
  return predict_from_logits(forward(model, x0, Mode::Infer).logits);
}

}  // namespace restcn
