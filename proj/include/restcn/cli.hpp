#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace restcn {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitCheckpoint = 4,
  kExitRefused = 5,
};

/// Flat key -> value view of a run configuration.
using Settings = std::map<std::string, std::string>;

/// Every recognised key with its default value ("" means derived or unset).
const Settings& default_settings();

/// Reads `key = value` lines; blank lines and '#' comments are skipped.
/// Unknown keys and malformed lines throw ConfigError.
Settings read_settings_file(const std::filesystem::path& path);

/// Serializes in key order, one `key = value` per line.
std::string format_settings(const Settings& settings);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace restcn
