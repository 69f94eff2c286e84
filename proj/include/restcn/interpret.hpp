#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "restcn/model.hpp"
#include "restcn/skeleton.hpp"

namespace restcn {

// Layers are numbered as in the model: layer 1 is the first convolution
// (X_1), layer l >= 2 is residual unit l (X_l). Filter k of layer l is
// channel k of X_l.

using JointEnergyMatrix = Eigen::Matrix<double, kMaxActors, kJointsPerBody>;

/// Weight curves of one joint across the taps of a first-layer filter.
struct JointTemplate {
  int actor = 0;
  int joint = 0;
  double energy = 0.0;
  Eigen::MatrixXd curves;  ///< taps x 3 (x, y, z)
};

/// What a first-layer filter looks at, in skeleton terms.
struct FilterProfile {
  int filter = 0;
  bool degenerate = false;  ///< all-zero filter: no energies, no templates
  /// Squared weight mass per (actor, joint), normalized to sum 1.
  JointEnergyMatrix energy = JointEnergyMatrix::Zero();
  /// Joints at or above the energy floor, strongest first.
  std::vector<JointTemplate> templates;

  /// (actor, joint) of the largest energy cell; lowest index on ties.
  std::pair<int, int> dominant_joint() const;
};

/// energy(actor, joint) = sum over the joint's 3 axes and all taps of w^2,
/// normalized. Requires a 150-channel first layer.
FilterProfile filter_joint_energy(const ConvFilterBank<double>& first_layer, int filter, double energy_floor = 0.05);

struct TraceOptions {
  int top_m = 3;
  int max_depth = -1;  ///< < 0: recurse to layer 1
  bool force = false;  ///< allow models with projected skip paths
};

struct TraceNode {
  int layer = 0;
  int filter = 0;
  double weight = 1.0;         ///< normalized |weight| of the edge from the parent
  double signed_weight = 1.0;  ///< normalized signed weight of that edge
  double influence = 1.0;      ///< product of weights along the path from the root
  double signed_influence = 1.0;
  std::vector<std::size_t> children;
};

struct TraceLeaf {
  int layer = 1;
  int filter = 0;
  double influence = 0.0;  ///< summed over every path reaching this filter
  double signed_influence = 0.0;
};

/// Tree of influential filters below a root filter. nodes[0] is the root.
struct InfluenceTrace {
  int layer = 0;
  int filter = 0;
  std::vector<TraceNode> nodes;
  std::vector<TraceLeaf> leaves;  ///< deduplicated, strongest first
};

/// Edge weights of filter `filter` in layer `layer` (>= 2): for each input
/// channel, the tap-summed |weight| and signed weight, both divided by the
/// total |weight| of the filter.
struct EdgeWeights {
  Eigen::VectorXd magnitude;
  Eigen::VectorXd sign;
};
EdgeWeights edge_weights(const ResTcnModel& model, int layer, int filter);

/// Recursively follows the top_m input channels of each filter down to
/// layer 1. Leaves reached by several paths accumulate the path products.
/// Throws InterpretabilityRefused for models with projected skips unless
/// forced.
InfluenceTrace trace_influence(const ResTcnModel& model, int layer, int filter, const TraceOptions& options = {});

/// Linear-interpolation percentile (numpy's default) of `values`.
double percentile(std::vector<double> values, double p);

/// Activations of one layer restricted, per time step, to the entries at or
/// above that step's p-th percentile across filters.
struct ActivationTimeline {
  int layer = 0;
  double percentile = 80.0;
  std::vector<int> frames;        ///< valid frame indices
  Eigen::MatrixXd values;         ///< frames.size() x channels, 0 where dropped
  KeptMask retained;              ///< same shape
  Eigen::VectorXd peak_value;     ///< per filter, max retained positive value (0 if none)
  std::vector<int> peak_frame;    ///< per filter, frame of that value (-1 if none)
};

ActivationTimeline activation_timeline(const ActivationCache& cache, int layer, double percentile);

struct ExplainOptions {
  int layer = -1;  ///< < 0: the last layer X_N
  double percentile = 80.0;
  int top_n = 3;
  int top_m = 3;
  int max_depth = -1;
  int leaves_per_filter = 3;
  double energy_floor = 0.05;
  bool force = false;
};

struct LeafReport {
  TraceLeaf leaf;
  FilterProfile profile;
};

struct FilterReport {
  int layer = 0;
  int filter = 0;
  int peak_frame = -1;
  double peak_value = 0.0;
  InfluenceTrace trace;
  std::vector<LeafReport> leaves;
  /// Leaf profiles mixed by their share of the reported leaves' influence.
  JointEnergyMatrix joint_energies = JointEnergyMatrix::Zero();
  std::vector<std::optional<double>> timeline;  ///< per valid frame; empty where dropped
};

struct ExplanationReport {
  SequenceInfo info;
  int predicted = 0;
  double probability = 0.0;
  Eigen::VectorXd probabilities;
  int layer = 0;
  double percentile = 80.0;
  int top_m = 3;
  std::vector<int> frames;
  std::vector<FilterReport> filters;
};

/// Forward pass, percentile timeline of the inspection layer, and for each
/// of its top_n filters (ranked by peak retained activation, positive peaks
/// only) an influence trace down to profiled first-layer filters.
ExplanationReport explain(const ResTcnModel& model, const Map& input, const SequenceInfo& info,
                          const ExplainOptions& options = {});

}  // namespace restcn
