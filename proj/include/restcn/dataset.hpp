#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <vector>

#include "restcn/skeleton.hpp"
#include "restcn/temporal_map.hpp"

namespace restcn {

enum class SplitMode { CrossSubject, CrossView };

/// A sample goes to the train side iff its subject id (CrossSubject) or
/// camera id (CrossView) is in `train_ids`; everything else is test.
struct SplitSpec {
  SplitMode mode = SplitMode::CrossSubject;
  std::set<int> train_ids;
};

/// Inclusive id range a split mode accepts: NTU has subjects 1..40 and
/// cameras 1..3.
struct IdRange {
  int first = 1;
  int last = 40;
};
IdRange known_ids(SplitMode mode);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Partitions `dataset` by `spec`. Empty train set -> ConfigError; an id
/// outside the known range (in the spec or on a sample) -> DataError.
SplitIndices make_split(std::span<const SkeletonSequence> dataset, const SplitSpec& spec);

/// One integer id per line; blank lines and '#' comments are skipped.
std::set<int> read_id_file(const std::filesystem::path& path);

/// Pads every map to the longest frame count with zero frames marked
/// invalid. Order is preserved.
std::vector<Map> pad_batch(std::span<const Map> sequences);

/// Parses every `*.skeleton` file of a directory, sorted by file name.
std::vector<SkeletonSequence> load_skeleton_dir(const std::filesystem::path& dir);

}  // namespace restcn
