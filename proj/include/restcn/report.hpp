#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "restcn/interpret.hpp"

namespace restcn {

/// Report JSON (UTF-8, 2-space indented, keys in fixed order). The layout
/// is described by data/report.schema.json.
std::string report_to_json(const ExplanationReport& report);

/// Inverse of report_to_json; throws DataError on malformed documents.
ExplanationReport report_from_json(const std::string& text);

/// One polyline per reported filter: valid frames on x, retained activation
/// on y (dropped steps drawn at 0).
std::string report_to_svg(const ExplanationReport& report);

/// Writes the JSON report to `json_path` and, when given, the SVG plot to
/// `svg_path`. Throws IoError if a file cannot be written.
void render_report(const ExplanationReport& report, const std::filesystem::path& json_path,
                   const std::optional<std::filesystem::path>& svg_path = std::nullopt);

/// "actor<a>.joint<j>" with 0-based indices.
std::string joint_key(int actor, int joint);

}  // namespace restcn
