#include "restcn/skeleton.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "restcn/errors.hpp"

namespace restcn {

namespace {

constexpr std::array<std::string_view, kJointsPerBody> kJointNames = {
    "base of spine",  "middle of spine", "neck",        "head",           "left shoulder",
    "left elbow",     "left wrist",      "left hand",   "right shoulder", "right elbow",
    "right wrist",    "right hand",      "left hip",    "left knee",      "left ankle",
    "left foot",      "right hip",       "right knee",  "right ankle",    "right foot",
    "spine",          "tip of left hand", "left thumb", "tip of right hand", "right thumb",
};

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  /// Next non-blank line split on whitespace.
  std::vector<std::string_view> fields(const std::string& expecting) {
    while (true) {
      if (!std::getline(in_, line_)) {
        throw ParseError(source_, line_no_ + 1, "unexpected end of file, expected " + expecting);
      }
      ++line_no_;
      split();
      if (!parts_.empty()) return parts_;
    }
  }

  int integer(std::string_view text, const std::string& what) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      fail("expected integer " + what + ", got '" + std::string(text) + "'");
    }
    return value;
  }

  double real(std::string_view text, const std::string& what) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      fail("expected number " + what + ", got '" + std::string(text) + "'");
    }
    return value;
  }

  int single_integer(const std::string& what) {
    auto f = fields(what);
    if (f.size() != 1) fail("expected a single " + what);
    return integer(f[0], what);
  }

  [[noreturn]] void fail(const std::string& message) const { throw ParseError(source_, line_no_, message); }

  bool only_whitespace_left() {
    std::string rest;
    while (std::getline(in_, rest)) {
      ++line_no_;
      if (rest.find_first_not_of(" \t\r\n") != std::string::npos) return false;
    }
    return true;
  }

 private:
  void split() {
    parts_.clear();
    std::string_view view(line_);
    std::size_t i = 0;
    while (i < view.size()) {
      while (i < view.size() && std::isspace(static_cast<unsigned char>(view[i]))) ++i;
      std::size_t j = i;
      while (j < view.size() && !std::isspace(static_cast<unsigned char>(view[j]))) ++j;
      if (j > i) parts_.push_back(view.substr(i, j - i));
      i = j;
    }
  }

  std::istream& in_;
  std::string source_;
  std::string line_;
  std::vector<std::string_view> parts_;
  std::size_t line_no_ = 0;
};

struct Body {
  std::array<Eigen::Vector3d, kJointsPerBody> joints;
  double tracking = 0.0;
};

}  // namespace

int joint_to_dim(const JointAxisIndex& index) {
  const int axis = static_cast<int>(index.axis);
  if (index.actor < 0 || index.actor >= kMaxActors || index.joint < 0 || index.joint >= kJointsPerBody || axis < 0 ||
      axis >= kAxes) {
    throw DomainError("joint index outside the 2 x 25 x 3 layout");
  }
  return kActorDims * index.actor + kAxes * index.joint + static_cast<int>(index.axis);
}

JointAxisIndex dim_to_joint(int dim) {
  if (dim < 0 || dim >= kFeatureDim) {
    throw DomainError("feature dimension " + std::to_string(dim) + " outside [0, 150)");
  }
  return {dim / kActorDims, (dim % kActorDims) / kAxes, static_cast<Axis>(dim % kAxes)};
}

std::string_view joint_name(int joint) {
  if (joint < 0 || joint >= kJointsPerBody) throw DomainError("joint index outside [0, 25)");
  return kJointNames[static_cast<std::size_t>(joint)];
}

char axis_name(Axis axis) { return "XYZ"[static_cast<int>(axis)]; }

bool SkeletonFrame::operator==(const SkeletonFrame& other) const {
  if (present != other.present) return false;
  for (int a = 0; a < kMaxActors; ++a) {
    for (int j = 0; j < kJointsPerBody; ++j) {
      if (joints[a][j] != other.joints[a][j]) return false;
    }
  }
  return true;
}

SkeletonSequence parse_skeleton(std::istream& in, const std::string& source) {
  LineReader reader(in, source);
  SkeletonSequence sequence;
  const int frame_count = reader.single_integer("frame count");
  if (frame_count < 1) reader.fail("frame count must be >= 1");
  sequence.frames.reserve(static_cast<std::size_t>(frame_count));

  for (int f = 0; f < frame_count; ++f) {
    const std::string frame_label = "frame " + std::to_string(f + 1) + " of " + std::to_string(frame_count);
    const int body_count = reader.single_integer("body count for " + frame_label);
    if (body_count < 0) reader.fail("negative body count");
    std::vector<Body> bodies(static_cast<std::size_t>(body_count));
    for (auto& body : bodies) {
      auto descriptor = reader.fields("body descriptor in " + frame_label);
      if (descriptor.size() != 10) reader.fail("body descriptor needs 10 fields, got " + std::to_string(descriptor.size()));
      const int joints = reader.single_integer("joint count in " + frame_label);
      if (joints != kJointsPerBody) {
        reader.fail("expected 25 joints per body, got " + std::to_string(joints));
      }
      for (int j = 0; j < kJointsPerBody; ++j) {
        auto f12 = reader.fields("joint line in " + frame_label);
        if (f12.size() != 12) reader.fail("joint line needs 12 fields, got " + std::to_string(f12.size()));
        for (int a = 0; a < kAxes; ++a) body.joints[j](a) = reader.real(f12[a], "joint coordinate");
        for (std::size_t k = 3; k < 12; ++k) (void)reader.real(f12[k], "joint field");
        body.tracking += reader.real(f12[11], "tracking state");
      }
    }

    std::vector<std::size_t> keep(bodies.size());
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    if (keep.size() > kMaxActors) {
      std::stable_sort(keep.begin(), keep.end(),
                       [&](std::size_t a, std::size_t b) { return bodies[a].tracking > bodies[b].tracking; });
      keep.resize(kMaxActors);
      std::sort(keep.begin(), keep.end());
    }
    SkeletonFrame frame;
    for (std::size_t slot = 0; slot < keep.size(); ++slot) {
      frame.present[slot] = true;
      frame.joints[slot] = bodies[keep[slot]].joints;
    }
    sequence.frames.push_back(frame);
  }
  if (!reader.only_whitespace_left()) reader.fail("trailing content after last frame");
  return sequence;
}

SkeletonSequence parse_skeleton_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open skeleton file " + path.string());
  SkeletonSequence sequence = parse_skeleton(in, path.filename().string());
  if (auto info = parse_ntu_name(path.filename().string())) sequence.info = *info;
  sequence.info.source = path.filename().string();
  return sequence;
}

void write_skeleton(std::ostream& out, const SkeletonSequence& sequence) {
  out << sequence.frames.size() << '\n';
  for (const auto& frame : sequence.frames) {
    const int bodies = static_cast<int>(frame.present[0]) + static_cast<int>(frame.present[1]);
    out << bodies << '\n';
    for (int a = 0; a < kMaxActors; ++a) {
      if (!frame.present[a]) continue;
      out << (72057594037930000ULL + static_cast<unsigned>(a)) << " 0 1 1 1 1 0 0 0 2\n";
      out << kJointsPerBody << '\n';
      for (int j = 0; j < kJointsPerBody; ++j) {
        const auto& p = frame.joints[a][j];
        out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z())
            << " 0 0 0 0 0 0 0 0 2\n";
      }
    }
  }
}

void write_skeleton_file(const std::filesystem::path& path, const SkeletonSequence& sequence) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_skeleton(out, sequence);
  if (!out) throw IoError("short write to " + path.string());
}

std::optional<SequenceInfo> parse_ntu_name(std::string_view filename) {
  // S001C002P003R002A013
  constexpr std::string_view tags = "SCPRA";
  if (filename.size() < 20) return std::nullopt;
  int values[5];
  for (std::size_t i = 0; i < 5; ++i) {
    const std::string_view chunk = filename.substr(i * 4, 4);
    if (chunk[0] != tags[i]) return std::nullopt;
    int v = 0;
    const auto [ptr, ec] = std::from_chars(chunk.data() + 1, chunk.data() + 4, v);
    if (ec != std::errc() || ptr != chunk.data() + 4) return std::nullopt;
    if (v < 1) return std::nullopt;
    values[i] = v;
  }
  SequenceInfo info;
  info.setup = values[0];
  info.camera = values[1];
  info.subject = values[2];
  info.replication = values[3];
  info.label = values[4] - 1;
  info.source = std::string(filename);
  return info;
}

std::string ntu_name(const SequenceInfo& info) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "S%03dC%03dP%03dR%03dA%03d", info.setup, info.camera, info.subject,
                info.replication, info.label + 1);
  return buf;
}

FeatureVector build_feature(const SkeletonFrame& frame) {
  FeatureVector v = FeatureVector::Zero();
  for (int a = 0; a < kMaxActors; ++a) {
    if (!frame.present[a]) continue;
    for (int j = 0; j < kJointsPerBody; ++j) v.segment<3>(kActorDims * a + kAxes * j) = frame.joints[a][j];
  }
  return v;
}

Map to_temporal_map(const SkeletonSequence& sequence) {
  if (sequence.frames.empty()) throw DomainError("to_temporal_map: empty sequence");
  Eigen::MatrixXd data(static_cast<Index>(sequence.frames.size()), kFeatureDim);
  for (std::size_t t = 0; t < sequence.frames.size(); ++t) {
    data.row(static_cast<Index>(t)) = build_feature(sequence.frames[t]).transpose();
  }
  return Map(std::move(data));
}

}  // namespace restcn
