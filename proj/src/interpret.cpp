#include "restcn/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace restcn {

std::pair<int, int> FilterProfile::dominant_joint() const {
  int best_actor = 0, best_joint = 0;
  for (int a = 0; a < kMaxActors; ++a) {
    for (int j = 0; j < kJointsPerBody; ++j) {
      if (energy(a, j) > energy(best_actor, best_joint)) {
        best_actor = a;
        best_joint = j;
      }
    }
  }
  return {best_actor, best_joint};
}

FilterProfile filter_joint_energy(const ConvFilterBank<double>& first_layer, int filter, double energy_floor) {
  if (first_layer.in_channels() != kFeatureDim) {
    throw DimensionError("filter_joint_energy: first layer must read 150 skeleton channels");
  }
  if (filter < 0 || filter >= first_layer.filters()) {
    throw DomainError("filter_joint_energy: filter " + std::to_string(filter) + " out of range");
  }
  FilterProfile profile;
  profile.filter = filter;
  const Eigen::MatrixXd w = first_layer.filter(filter);  // taps x 150
  for (int d = 0; d < kFeatureDim; ++d) {
    const JointAxisIndex idx = dim_to_joint(d);
    profile.energy(idx.actor, idx.joint) += w.col(d).squaredNorm();
  }
  const double total = profile.energy.sum();
  if (total == 0.0) {
    profile.degenerate = true;
    return profile;
  }
  profile.energy /= total;

  std::vector<std::pair<int, int>> cells;
  for (int a = 0; a < kMaxActors; ++a) {
    for (int j = 0; j < kJointsPerBody; ++j) {
      if (profile.energy(a, j) >= energy_floor) cells.emplace_back(a, j);
    }
  }
  std::stable_sort(cells.begin(), cells.end(), [&](const auto& l, const auto& r) {
    return profile.energy(l.first, l.second) > profile.energy(r.first, r.second);
  });
  for (const auto& [a, j] : cells) {
    JointTemplate t{a, j, profile.energy(a, j), w.middleCols(joint_to_dim({a, j, Axis::X}), kAxes)};
    profile.templates.push_back(std::move(t));
  }
  return profile;
}

namespace {

void require_layer(const ResTcnModel& model, int layer) {
  if (layer < 1 || layer > model.config.layers()) {
    throw DomainError("layer " + std::to_string(layer) + " outside [1, " + std::to_string(model.config.layers()) + "]");
  }
}

void require_interpretable(const ResTcnModel& model, bool force) {
  if (!force && !model.config.interpretable()) {
    throw InterpretabilityRefused(
        "model has projected skip paths (channel growth or stride); deep layers are not additive offsets of "
        "X_1. Pass force to trace anyway.");
  }
}

}  // namespace

EdgeWeights edge_weights(const ResTcnModel& model, int layer, int filter) {
  require_layer(model, layer);
  if (layer < 2) throw DomainError("edge_weights: layer 1 has no filter inputs to trace");
  const auto& bank = model.params.units[static_cast<std::size_t>(layer - 2)].branch;
  if (filter < 0 || filter >= bank.filters()) throw DomainError("edge_weights: filter out of range");
  const Eigen::MatrixXd w = bank.filter(filter);  // taps x in_channels
  EdgeWeights out;
  out.magnitude = w.cwiseAbs().colwise().sum().transpose();
  out.sign = w.colwise().sum().transpose();
  const double total = out.magnitude.sum();
  if (total > 0.0) {
    out.magnitude /= total;
    out.sign /= total;
  }
  return out;
}

InfluenceTrace trace_influence(const ResTcnModel& model, int layer, int filter, const TraceOptions& options) {
  require_layer(model, layer);
  require_interpretable(model, options.force);
  if (options.top_m < 1) throw DomainError("trace_influence: top_m must be >= 1");
  const Index width = layer == 1 ? model.params.first.filters()
                                 : model.params.units[static_cast<std::size_t>(layer - 2)].branch.filters();
  if (filter < 0 || filter >= width) throw DomainError("trace_influence: filter out of range");

  InfluenceTrace trace;
  trace.layer = layer;
  trace.filter = filter;
  trace.nodes.push_back(TraceNode{layer, filter, 1.0, 1.0, 1.0, 1.0, {}});
  // Leaves keyed by (layer, filter) to deduplicate.
  std::map<std::pair<int, int>, TraceLeaf> leaves;

  // Depth-first expansion; an explicit stack keeps node ids in creation order.
  std::vector<std::pair<std::size_t, int>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [id, depth] = stack.back();
    stack.pop_back();
    const TraceNode node = trace.nodes[id];
    const bool depth_exhausted = options.max_depth >= 0 && depth >= options.max_depth;
    if (node.layer == 1 || depth_exhausted) {
      TraceLeaf& leaf = leaves[{node.layer, node.filter}];
      leaf.layer = node.layer;
      leaf.filter = node.filter;
      leaf.influence += node.influence;
      leaf.signed_influence += node.signed_influence;
      continue;
    }
    const EdgeWeights edges = edge_weights(model, node.layer, node.filter);
    std::vector<int> order(static_cast<std::size_t>(edges.magnitude.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return edges.magnitude(a) > edges.magnitude(b); });
    const std::size_t take = std::min<std::size_t>(order.size(), static_cast<std::size_t>(options.top_m));
    std::vector<std::size_t> children;
    for (std::size_t i = 0; i < take; ++i) {
      const int channel = order[i];
      if (edges.magnitude(channel) <= 0.0) break;
      TraceNode child{node.layer - 1,
                      channel,
                      edges.magnitude(channel),
                      edges.sign(channel),
                      node.influence * edges.magnitude(channel),
                      node.signed_influence * edges.sign(channel),
                      {}};
      children.push_back(trace.nodes.size());
      trace.nodes.push_back(std::move(child));
    }
    trace.nodes[id].children = children;
    for (auto it = children.rbegin(); it != children.rend(); ++it) stack.emplace_back(*it, depth + 1);
  }

  for (auto& [key, leaf] : leaves) trace.leaves.push_back(leaf);
  std::stable_sort(trace.leaves.begin(), trace.leaves.end(),
                   [](const TraceLeaf& a, const TraceLeaf& b) { return a.influence > b.influence; });
  return trace;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw DomainError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double rank = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

ActivationTimeline activation_timeline(const ActivationCache& cache, int layer, double p) {
  if (cache.mode != Mode::Infer) throw ContractError("activation_timeline: needs an infer-mode cache");
  if (!(p > 0.0 && p < 100.0)) throw DomainError("activation_timeline: percentile must lie in (0, 100)");
  if (layer < 1 || layer >= static_cast<int>(cache.layers.size())) {
    throw DomainError("activation_timeline: layer " + std::to_string(layer) + " not in cache");
  }
  const Map& map = cache.layers[static_cast<std::size_t>(layer)];
  ActivationTimeline out;
  out.layer = layer;
  out.percentile = p;
  for (Index t = 0; t < map.frames(); ++t) {
    if (map.mask(t)) out.frames.push_back(static_cast<int>(t));
  }
  const Index rows = static_cast<Index>(out.frames.size());
  const Index channels = map.channels();
  out.values = Eigen::MatrixXd::Zero(rows, channels);
  out.retained = KeptMask::Constant(rows, channels, false);
  out.peak_value = Eigen::VectorXd::Zero(channels);
  out.peak_frame.assign(static_cast<std::size_t>(channels), -1);

  std::vector<double> column(static_cast<std::size_t>(channels));
  for (Index r = 0; r < rows; ++r) {
    const Index t = out.frames[static_cast<std::size_t>(r)];
    for (Index k = 0; k < channels; ++k) column[static_cast<std::size_t>(k)] = map.data(t, k);
    const double threshold = percentile(column, p);
    for (Index k = 0; k < channels; ++k) {
      const double v = map.data(t, k);
      if (v < threshold) continue;
      out.retained(r, k) = true;
      out.values(r, k) = v;
      if (v > out.peak_value(k)) {
        out.peak_value(k) = v;
        out.peak_frame[static_cast<std::size_t>(k)] = static_cast<int>(t);
      }
    }
  }
  return out;
}

ExplanationReport explain(const ResTcnModel& model, const Map& input, const SequenceInfo& info,
                          const ExplainOptions& options) {
  const int layer = options.layer < 0 ? model.config.layers() : options.layer;
  require_layer(model, layer);
  require_interpretable(model, options.force);
  if (options.top_n < 0) throw DomainError("explain: top_n must be >= 0");

  const ActivationCache cache = forward(model, input, Mode::Infer);
  const Prediction prediction = predict_from_logits(cache.logits);
  const ActivationTimeline timeline = activation_timeline(cache, layer, options.percentile);

  ExplanationReport report;
  report.info = info;
  report.predicted = prediction.label;
  report.probability = prediction.probabilities(prediction.label);
  report.probabilities = prediction.probabilities;
  report.layer = layer;
  report.percentile = options.percentile;
  report.top_m = options.top_m;
  report.frames = timeline.frames;

  std::vector<int> ranked;
  for (Index k = 0; k < timeline.peak_value.size(); ++k) {
    if (timeline.peak_value(k) > 0.0) ranked.push_back(static_cast<int>(k));
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](int a, int b) { return timeline.peak_value(a) > timeline.peak_value(b); });
  if (ranked.size() > static_cast<std::size_t>(options.top_n)) ranked.resize(static_cast<std::size_t>(options.top_n));

  const bool can_profile = model.params.first.in_channels() == kFeatureDim;
  for (int k : ranked) {
    FilterReport fr;
    fr.layer = layer;
    fr.filter = k;
    fr.peak_frame = timeline.peak_frame[static_cast<std::size_t>(k)];
    fr.peak_value = timeline.peak_value(k);
    fr.trace = trace_influence(model, layer, k, {options.top_m, options.max_depth, options.force});

    double mixed_influence = 0.0;
    for (const auto& leaf : fr.trace.leaves) {
      if (fr.leaves.size() >= static_cast<std::size_t>(std::max(0, options.leaves_per_filter))) break;
      if (leaf.layer != 1 || !can_profile) continue;
      LeafReport lr{leaf, filter_joint_energy(model.params.first, leaf.filter, options.energy_floor)};
      if (!lr.profile.degenerate) {
        fr.joint_energies += leaf.influence * lr.profile.energy;
        mixed_influence += leaf.influence;
      }
      fr.leaves.push_back(std::move(lr));
    }
    if (mixed_influence > 0.0) fr.joint_energies /= mixed_influence;

    fr.timeline.resize(timeline.frames.size());
    for (std::size_t r = 0; r < timeline.frames.size(); ++r) {
      if (timeline.retained(static_cast<Index>(r), k)) fr.timeline[r] = timeline.values(static_cast<Index>(r), k);
    }
    report.filters.push_back(std::move(fr));
  }
  return report;
}

}  // namespace restcn
