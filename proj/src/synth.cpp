#include "restcn/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "restcn/errors.hpp"

namespace restcn {

namespace {

// Rest pose, body-centered (base of spine at the origin, y up, z toward the
// sensor negative).
constexpr double kRestPose[kJointsPerBody][3] = {
    {0.00, 0.00, 0.00},   {0.00, 0.25, 0.00},   {0.00, 0.50, 0.00},   {0.00, 0.62, 0.00},
    {-0.18, 0.45, 0.00},  {-0.25, 0.20, 0.00},  {-0.27, -0.02, 0.00}, {-0.28, -0.08, 0.00},
    {0.18, 0.45, 0.00},   {0.25, 0.20, 0.00},   {0.27, -0.02, 0.00},  {0.28, -0.08, 0.00},
    {-0.10, -0.02, 0.00}, {-0.11, -0.45, 0.00}, {-0.12, -0.85, 0.00}, {-0.12, -0.90, -0.08},
    {0.10, -0.02, 0.00},  {0.11, -0.45, 0.00},  {0.12, -0.85, 0.00},  {0.12, -0.90, -0.08},
    {0.00, 0.42, 0.00},   {-0.29, -0.14, 0.00}, {-0.26, -0.10, -0.03}, {0.29, -0.14, 0.00},
    {0.26, -0.10, -0.03},
};
constexpr double kSecondActorOffsetX = 1.0;

int dim(int actor, int joint, Axis axis) { return joint_to_dim({actor, joint, axis}); }

MotifTemplate make_template(std::vector<int> dims, int length, bool hold) {
  MotifTemplate t;
  t.dims = std::move(dims);
  t.displacement = Eigen::MatrixXd::Zero(length, static_cast<Index>(t.dims.size()));
  t.hold = hold;
  return t;
}

}  // namespace

std::string_view motif_name(Motif motif) {
  switch (motif) {
    case Motif::Jitter: return "jitter";
    case Motif::LimbTranslation: return "limb_translation";
    case Motif::ActorSeparation: return "actor_separation";
    case Motif::Swing: return "swing";
    case Motif::Static: return "static";
    case Motif::Kick: return "kick";
  }
  return "unknown";
}

std::array<Eigen::Vector3d, kJointsPerBody> baseline_pose(int actor) {
  std::array<Eigen::Vector3d, kJointsPerBody> pose;
  for (int j = 0; j < kJointsPerBody; ++j) {
    pose[j] = Eigen::Vector3d(kRestPose[j][0], kRestPose[j][1], kRestPose[j][2]);
    if (actor == 1) pose[j].x() += kSecondActorOffsetX;
  }
  return pose;
}

MotifTemplate motif_template(Motif motif) {
  constexpr double pi = std::numbers::pi;
  switch (motif) {
    case Motif::Jitter: {
      // Right hand, alternating offsets on every axis.
      auto t = make_template({dim(0, 11, Axis::X), dim(0, 11, Axis::Y), dim(0, 11, Axis::Z)}, 4, false);
      const Eigen::Vector3d amplitude(0.08, 0.06, 0.04);
      for (int tau = 0; tau < 4; ++tau) t.displacement.row(tau) = (tau % 2 == 0 ? 1.0 : -1.0) * amplitude.transpose();
      return t;
    }
    case Motif::LimbTranslation: {
      std::vector<int> dims;
      for (int joint : {13, 14, 15}) {
        dims.push_back(dim(0, joint, Axis::X));
        dims.push_back(dim(0, joint, Axis::Z));
      }
      auto t = make_template(dims, 15, true);
      for (int tau = 0; tau < 15; ++tau) {
        const double s = (tau + 1) / 15.0;
        for (int j = 0; j < 3; ++j) {
          t.displacement(tau, 2 * j) = 0.25 * s;
          t.displacement(tau, 2 * j + 1) = -0.15 * s;
        }
      }
      return t;
    }
    case Motif::ActorSeparation: {
      std::vector<int> dims;
      for (int actor = 0; actor < 2; ++actor) {
        for (int joint = 0; joint < kJointsPerBody; ++joint) dims.push_back(dim(actor, joint, Axis::X));
      }
      auto t = make_template(dims, 20, true);
      for (int tau = 0; tau < 20; ++tau) {
        const double s = 0.4 * (tau + 1) / 20.0;
        t.displacement.row(tau).head(kJointsPerBody).setConstant(-s);
        t.displacement.row(tau).tail(kJointsPerBody).setConstant(s);
      }
      return t;
    }
    case Motif::Swing: {
      std::vector<int> dims;
      for (int joint : {9, 10, 11}) {
        dims.push_back(dim(0, joint, Axis::Y));
        dims.push_back(dim(0, joint, Axis::Z));
      }
      auto t = make_template(dims, 24, false);
      const double reach[3] = {0.08, 0.16, 0.20};
      for (int tau = 0; tau < 24; ++tau) {
        const double phase = std::sin(2.0 * pi * tau / 24.0);
        for (int j = 0; j < 3; ++j) {
          t.displacement(tau, 2 * j) = 0.5 * reach[j] * (1.0 - std::cos(2.0 * pi * tau / 24.0));
          t.displacement(tau, 2 * j + 1) = -reach[j] * phase;
        }
      }
      return t;
    }
    case Motif::Static:
      return make_template({}, 1, false);
    case Motif::Kick: {
      std::vector<int> dims = {dim(0, 14, Axis::X), dim(0, 12, Axis::X), dim(0, 17, Axis::Z),
                               dim(0, 18, Axis::Z), dim(0, 6, Axis::Z)};
      auto t = make_template(dims, 20, false);
      for (int tau = 0; tau < 20; ++tau) {
        const double step = 0.15 * std::min(1.0, (tau + 1) / 8.0);
        t.displacement(tau, 0) = step;
        t.displacement(tau, 1) = step;
        if (tau >= 8 && tau < 13) t.displacement(tau, 2) = -0.25 * std::sin(pi * (tau - 7) / 6.0);
        const double swing = 0.1 * std::sin(2.0 * pi * tau / 20.0);
        t.displacement(tau, 3) = swing;
        t.displacement(tau, 4) = -swing;
      }
      return t;
    }
  }
  throw DomainError("unknown motif");
}

SyntheticDataset synth_generate(int num_classes, int per_class, std::uint64_t seed, const SynthOptions& options) {
  if (num_classes < 1 || num_classes > kMotifCount) {
    throw ConfigError("synthetic datasets support 1.." + std::to_string(kMotifCount) + " classes");
  }
  if (per_class < 0) throw ConfigError("per_class must be >= 0");
  if (options.min_frames < 1 || options.max_frames < options.min_frames) throw ConfigError("bad synthetic frame range");
  if (options.subjects < 1 || options.subjects > 40 || options.cameras < 1 || options.cameras > 3) {
    throw ConfigError("synthetic subjects must lie in 1..40 and cameras in 1..3");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, options.noise_sigma);
  std::uniform_real_distribution<double> offset(-options.offset_range, options.offset_range);
  std::uniform_int_distribution<int> length_dist(options.min_frames, options.max_frames);
  std::bernoulli_distribution second_actor(options.second_actor_rate);

  SyntheticDataset out;
  for (int c = 0; c < num_classes; ++c) {
    const Motif motif = static_cast<Motif>(c);
    const MotifTemplate tmpl = motif_template(motif);
    for (int i = 0; i < per_class; ++i) {
      const int frames = length_dist(rng);
      const int latest = std::max(0, frames - tmpl.length() - 5);
      const int earliest = std::min(5, latest);
      const int onset = std::uniform_int_distribution<int>(earliest, latest)(rng);
      const bool two_actors = motif == Motif::ActorSeparation || second_actor(rng);

      std::array<std::array<Eigen::Vector3d, kJointsPerBody>, kMaxActors> base{baseline_pose(0), baseline_pose(1)};
      for (int a = 0; a < kMaxActors; ++a) {
        const Eigen::Vector3d shift(offset(rng), offset(rng), offset(rng));
        for (auto& j : base[a]) j += shift;
      }

      SkeletonSequence seq;
      seq.frames.resize(static_cast<std::size_t>(frames));
      for (int t = 0; t < frames; ++t) {
        SkeletonFrame& frame = seq.frames[static_cast<std::size_t>(t)];
        for (int a = 0; a < kMaxActors; ++a) {
          frame.present[a] = a == 0 || two_actors;
          if (!frame.present[a]) continue;
          for (int j = 0; j < kJointsPerBody; ++j) {
            frame.joints[a][j] = base[a][j] + Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
          }
        }
        const int tau = t - onset;
        if (tau < 0) continue;
        int row = tau;
        if (tau >= tmpl.length()) {
          if (!tmpl.hold) continue;
          row = tmpl.length() - 1;
        }
        for (std::size_t k = 0; k < tmpl.dims.size(); ++k) {
          const JointAxisIndex idx = dim_to_joint(tmpl.dims[k]);
          frame.joints[idx.actor][idx.joint](static_cast<int>(idx.axis)) += tmpl.displacement(row, static_cast<Index>(k));
        }
      }

      SequenceInfo& info = seq.info;
      info.setup = 1;
      info.subject = 1 + i % options.subjects;
      info.camera = 1 + (i / options.subjects) % options.cameras;
      info.replication = 1 + i / (options.subjects * options.cameras);
      info.label = c;
      info.source = ntu_name(info) + ".skeleton";
      out.sequences.push_back(std::move(seq));
      out.planted.push_back({motif, onset, tmpl.length()});
    }
  }
  return out;
}

void write_synthetic(const SyntheticDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv", std::ios::trunc);
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.csv").string());
  manifest << "file,label,motif,onset,length\n";
  for (std::size_t i = 0; i < dataset.sequences.size(); ++i) {
    const auto& seq = dataset.sequences[i];
    const auto& planted = dataset.planted[i];
    const std::string file = ntu_name(seq.info) + ".skeleton";
    write_skeleton_file(dir / file, seq);
    manifest << file << ',' << seq.info.label << ',' << motif_name(planted.motif) << ',' << planted.onset << ','
             << planted.length << '\n';
  }
}

}  // namespace restcn
