#pragma once

#include <Eigen/Dense>

#include <array>
#include <compare>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "restcn/temporal_map.hpp"

namespace restcn {

inline constexpr int kJointsPerBody = 25;
inline constexpr int kMaxActors = 2;
inline constexpr int kAxes = 3;
inline constexpr int kActorDims = kJointsPerBody * kAxes;  // 75
inline constexpr int kFeatureDim = kMaxActors * kActorDims;  // 150

enum class Axis { X = 0, Y = 1, Z = 2 };

/// One coordinate of one joint of one actor. Joints are 0-based.
struct JointAxisIndex {
  int actor = 0;
  int joint = 0;
  Axis axis = Axis::X;

  auto operator<=>(const JointAxisIndex&) const = default;
};

/// d = 75 * actor + 3 * joint + axis.
int joint_to_dim(const JointAxisIndex& index);

/// Inverse of joint_to_dim; throws DomainError outside [0, 150).
JointAxisIndex dim_to_joint(int dim);

/// NTU RGB+D joint name for a 0-based joint index.
std::string_view joint_name(int joint);

char axis_name(Axis axis);

struct SkeletonFrame {
  std::array<std::array<Eigen::Vector3d, kJointsPerBody>, kMaxActors> joints{};
  std::array<bool, kMaxActors> present{};

  SkeletonFrame() {
    for (auto& body : joints) {
      for (auto& j : body) j.setZero();
    }
  }

  bool operator==(const SkeletonFrame& other) const;
};

/// Sample metadata. Ids are NTU's 1-based numbers; -1 means unknown.
struct SequenceInfo {
  int setup = -1;
  int camera = -1;
  int subject = -1;
  int replication = -1;
  int label = -1;  ///< 0-based class (NTU action number - 1)
  std::string source;

  bool operator==(const SequenceInfo&) const = default;
};

struct SkeletonSequence {
  std::vector<SkeletonFrame> frames;
  SequenceInfo info;
};

/// Parses the NTU `.skeleton` text layout:
///   frame count
///   per frame: body count, then per body a 10-field descriptor line, a
///   joint count line (25) and 25 joint lines of 12 fields (x y z first).
/// Up to two bodies are kept per frame; with more, the two with the highest
/// summed joint tracking state win (file order breaks ties) and stay in
/// file order. Throws ParseError with the offending line.
SkeletonSequence parse_skeleton(std::istream& in, const std::string& source = "<stream>");
SkeletonSequence parse_skeleton_file(const std::filesystem::path& path);

/// Writes `sequence` in the same layout. Coordinates use the shortest
/// representation that parses back to the identical double; the fields
/// the reader ignores are filled with neutral values.
void write_skeleton(std::ostream& out, const SkeletonSequence& sequence);
void write_skeleton_file(const std::filesystem::path& path, const SkeletonSequence& sequence);

/// Metadata from a file name of the form SsssCcccPpppRrrrAaaa[...].
std::optional<SequenceInfo> parse_ntu_name(std::string_view filename);
std::string ntu_name(const SequenceInfo& info);

using FeatureVector = Eigen::Matrix<double, kFeatureDim, 1>;

/// Raw coordinates, actor 0 joints 0..24 as (x, y, z) then actor 1; absent
/// actors are zero. No normalization of any kind.
FeatureVector build_feature(const SkeletonFrame& frame);

/// T x 150 map of build_feature rows, all frames valid.
Map to_temporal_map(const SkeletonSequence& sequence);

}  // namespace restcn
