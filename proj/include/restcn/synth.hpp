#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "restcn/skeleton.hpp"

namespace restcn {

/// Planted motions of the synthetic action dataset. Class k of a generated
/// dataset carries motif k.
enum class Motif {
  Jitter = 0,           ///< quick back-and-forth of the right hand
  LimbTranslation = 1,  ///< left knee, ankle and foot slide and stay
  ActorSeparation = 2,  ///< two actors translate apart
  Swing = 3,            ///< right arm swings through one period
  Static = 4,           ///< no motion beyond pose noise
  Kick = 5,             ///< left ankle/hip shift, right knee snap, swinging right ankle and left wrist
};
inline constexpr int kMotifCount = 6;

std::string_view motif_name(Motif motif);

/// Displacement added to the baseline pose while a motif plays: row tau is
/// the offset at onset + tau for each listed feature dimension. With `hold`
/// the last row persists until the end of the sequence.
struct MotifTemplate {
  std::vector<int> dims;
  Eigen::MatrixXd displacement;  ///< length x dims.size()
  bool hold = false;

  int length() const { return static_cast<int>(displacement.rows()); }
};

MotifTemplate motif_template(Motif motif);

struct SynthOptions {
  int min_frames = 50;
  int max_frames = 90;
  double noise_sigma = 0.01;     ///< per-coordinate Gaussian pose noise, meters
  double offset_range = 0.05;    ///< per-sample uniform body offset, meters
  /// Chance of a bystander second actor in single-actor motifs. Off by
  /// default: a body that appears or vanishes moves 75 raw channels by about
  /// a meter, which swamps centimeter-scale motifs for an unnormalized model.
  double second_actor_rate = 0.0;
  int subjects = 7;
  int cameras = 3;
};

struct PlantedMotif {
  Motif motif = Motif::Static;
  int onset = 0;
  int length = 0;
};

struct SyntheticDataset {
  std::vector<SkeletonSequence> sequences;
  std::vector<PlantedMotif> planted;  ///< parallel to sequences
};

/// Generates `per_class` sequences for each of the first `num_classes`
/// motifs. Deterministic in `seed`. Sample i of a class gets subject
/// 1 + i % subjects and camera 1 + (i / subjects) % cameras.
SyntheticDataset synth_generate(int num_classes, int per_class, std::uint64_t seed, const SynthOptions& options = {});

/// The baseline (rest) pose of actor `actor`, joints in meters.
std::array<Eigen::Vector3d, kJointsPerBody> baseline_pose(int actor);

/// Writes one NTU-named `.skeleton` file per sequence plus `manifest.csv`
/// (file,label,motif,onset,length).
void write_synthetic(const SyntheticDataset& dataset, const std::filesystem::path& dir);

}  // namespace restcn
