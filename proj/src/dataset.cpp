#include "restcn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "restcn/errors.hpp"
#include "restcn/parallel.hpp"

namespace restcn {

IdRange known_ids(SplitMode mode) {
  return mode == SplitMode::CrossSubject ? IdRange{1, 40} : IdRange{1, 3};
}

SplitIndices make_split(std::span<const SkeletonSequence> dataset, const SplitSpec& spec) {
  if (spec.train_ids.empty()) throw ConfigError("split has an empty train id set");
  const IdRange range = known_ids(spec.mode);
  const char* kind = spec.mode == SplitMode::CrossSubject ? "subject" : "camera";
  for (int id : spec.train_ids) {
    if (id < range.first || id > range.last) {
      throw DataError(std::string("split lists unknown ") + kind + " id " + std::to_string(id));
    }
  }
  SplitIndices out;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& info = dataset[i].info;
    const int id = spec.mode == SplitMode::CrossSubject ? info.subject : info.camera;
    if (id < range.first || id > range.last) {
      throw DataError(std::string("sample ") + info.source + " has unknown " + kind + " id " + std::to_string(id));
    }
    (spec.train_ids.contains(id) ? out.train : out.test).push_back(i);
  }
  return out;
}

std::set<int> read_id_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open id file " + path.string());
  std::set<int> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string_view text(line.data() + first, last - first + 1);
    int id = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": not an integer id");
    }
    ids.insert(id);
  }
  return ids;
}

std::vector<Map> pad_batch(std::span<const Map> sequences) {
  if (sequences.empty()) throw DomainError("pad_batch: empty batch");
  Index longest = 0;
  const Index channels = sequences.front().channels();
  for (const auto& s : sequences) {
    if (s.channels() != channels) throw DimensionError("pad_batch: channel counts differ");
    longest = std::max(longest, s.frames());
  }
  std::vector<Map> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) {
    Eigen::MatrixXd data = Eigen::MatrixXd::Zero(longest, channels);
    data.topRows(s.frames()) = s.data;
    FrameMask mask = FrameMask::Constant(longest, false);
    mask.head(s.frames()) = s.mask;
    out.emplace_back(std::move(data), std::move(mask));
  }
  return out;
}

std::vector<SkeletonSequence> load_skeleton_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".skeleton") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SkeletonSequence> out(files.size());
  parallel_for(files.size(), [&](std::size_t i) { out[i] = parse_skeleton_file(files[i]); });
  return out;
}

}  // namespace restcn
