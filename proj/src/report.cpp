#include "restcn/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace restcn {

namespace {

using json = nlohmann::ordered_json;

constexpr int kReportVersion = 1;
constexpr const char* kNumberingNote =
    "actor/joint keys and indices are 0-based; display_joint is the 1-based NTU joint number";

const char* effect(double signed_influence) { return signed_influence >= 0.0 ? "adds" : "subtracts"; }

json energies_to_json(const JointEnergyMatrix& energy) {
  json out = json::object();
  for (int a = 0; a < kMaxActors; ++a) {
    for (int j = 0; j < kJointsPerBody; ++j) out[joint_key(a, j)] = energy(a, j);
  }
  return out;
}

JointEnergyMatrix energies_from_json(const json& j) {
  JointEnergyMatrix energy = JointEnergyMatrix::Zero();
  for (int a = 0; a < kMaxActors; ++a) {
    for (int k = 0; k < kJointsPerBody; ++k) energy(a, k) = j.at(joint_key(a, k)).get<double>();
  }
  return energy;
}

json profile_to_json(const FilterProfile& p) {
  json templates = json::array();
  for (const auto& t : p.templates) {
    json curves = json::array();
    for (Index r = 0; r < t.curves.rows(); ++r) {
      json row = json::array();
      for (Index c = 0; c < t.curves.cols(); ++c) row.push_back(t.curves(r, c));
      curves.push_back(std::move(row));
    }
    templates.push_back({{"actor", t.actor},
                         {"joint", t.joint},
                         {"display_joint", t.joint + 1},
                         {"name", std::string(joint_name(t.joint))},
                         {"energy", t.energy},
                         {"curves", std::move(curves)}});
  }
  return {{"filter", p.filter},
          {"degenerate", p.degenerate},
          {"joint_energies", energies_to_json(p.energy)},
          {"templates", std::move(templates)}};
}

FilterProfile profile_from_json(const json& j) {
  FilterProfile p;
  p.filter = j.at("filter").get<int>();
  p.degenerate = j.at("degenerate").get<bool>();
  p.energy = energies_from_json(j.at("joint_energies"));
  for (const auto& t : j.at("templates")) {
    JointTemplate jt;
    jt.actor = t.at("actor").get<int>();
    jt.joint = t.at("joint").get<int>();
    jt.energy = t.at("energy").get<double>();
    const auto& curves = t.at("curves");
    const Index cols = curves.empty() ? kAxes : static_cast<Index>(curves.front().size());
    jt.curves = Eigen::MatrixXd(static_cast<Index>(curves.size()), cols);
    for (Index r = 0; r < jt.curves.rows(); ++r) {
      for (Index c = 0; c < cols; ++c) jt.curves(r, c) = curves.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    }
    p.templates.push_back(std::move(jt));
  }
  return p;
}

json leaf_to_json(const TraceLeaf& leaf) {
  return {{"layer", leaf.layer},
          {"filter", leaf.filter},
          {"influence", leaf.influence},
          {"signed_influence", leaf.signed_influence},
          {"effect", effect(leaf.signed_influence)}};
}

TraceLeaf leaf_from_json(const json& j) {
  return {j.at("layer").get<int>(), j.at("filter").get<int>(), j.at("influence").get<double>(),
          j.at("signed_influence").get<double>()};
}

json trace_to_json(const InfluenceTrace& trace) {
  json nodes = json::array();
  for (const auto& n : trace.nodes) {
    nodes.push_back({{"layer", n.layer},
                     {"filter", n.filter},
                     {"weight", n.weight},
                     {"signed_weight", n.signed_weight},
                     {"influence", n.influence},
                     {"signed_influence", n.signed_influence},
                     {"children", n.children}});
  }
  json leaves = json::array();
  for (const auto& l : trace.leaves) leaves.push_back(leaf_to_json(l));
  return {{"root", {{"layer", trace.layer}, {"filter", trace.filter}}}, {"nodes", std::move(nodes)},
          {"leaves", std::move(leaves)}};
}

InfluenceTrace trace_from_json(const json& j) {
  InfluenceTrace trace;
  trace.layer = j.at("root").at("layer").get<int>();
  trace.filter = j.at("root").at("filter").get<int>();
  for (const auto& n : j.at("nodes")) {
    trace.nodes.push_back({n.at("layer").get<int>(), n.at("filter").get<int>(), n.at("weight").get<double>(),
                           n.at("signed_weight").get<double>(), n.at("influence").get<double>(),
                           n.at("signed_influence").get<double>(), n.at("children").get<std::vector<std::size_t>>()});
  }
  for (const auto& l : j.at("leaves")) trace.leaves.push_back(leaf_from_json(l));
  return trace;
}

}  // namespace

std::string joint_key(int actor, int joint) {
  return "actor" + std::to_string(actor) + ".joint" + std::to_string(joint);
}

std::string report_to_json(const ExplanationReport& report) {
  json probabilities = json::array();
  for (Index k = 0; k < report.probabilities.size(); ++k) probabilities.push_back(report.probabilities(k));

  json filters = json::array();
  for (const auto& f : report.filters) {
    json leaves = json::array();
    for (const auto& l : f.leaves) {
      json entry = leaf_to_json(l.leaf);
      entry["profile"] = profile_to_json(l.profile);
      leaves.push_back(std::move(entry));
    }
    json timeline = json::array();
    for (const auto& v : f.timeline) timeline.push_back(v ? json(*v) : json(nullptr));
    filters.push_back({{"layer", f.layer},
                       {"id", f.filter},
                       {"peak_frame", f.peak_frame},
                       {"peak_value", f.peak_value},
                       {"trace", trace_to_json(f.trace)},
                       {"leaves", std::move(leaves)},
                       {"joint_energies", energies_to_json(f.joint_energies)},
                       {"timeline", std::move(timeline)}});
  }

  const SequenceInfo& info = report.info;
  json doc = {{"format", "restcn-explanation"},
              {"version", kReportVersion},
              {"joint_numbering", kNumberingNote},
              {"sequence",
               {{"source", info.source},
                {"setup", info.setup},
                {"camera", info.camera},
                {"subject", info.subject},
                {"replication", info.replication},
                {"label", info.label}}},
              {"prediction",
               {{"class", report.predicted}, {"probability", report.probability}, {"probabilities", probabilities}}},
              {"layer", report.layer},
              {"percentile", report.percentile},
              {"top_m", report.top_m},
              {"frames", report.frames},
              {"filters", std::move(filters)}};
  return doc.dump(2) + "\n";
}

ExplanationReport report_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "restcn-explanation") throw DataError("not an explanation report");
    if (doc.at("version").get<int>() != kReportVersion) throw DataError("unsupported report version");
    ExplanationReport r;
    const auto& seq = doc.at("sequence");
    r.info.source = seq.at("source").get<std::string>();
    r.info.setup = seq.at("setup").get<int>();
    r.info.camera = seq.at("camera").get<int>();
    r.info.subject = seq.at("subject").get<int>();
    r.info.replication = seq.at("replication").get<int>();
    r.info.label = seq.at("label").get<int>();
    const auto& pred = doc.at("prediction");
    r.predicted = pred.at("class").get<int>();
    r.probability = pred.at("probability").get<double>();
    const auto probs = pred.at("probabilities").get<std::vector<double>>();
    r.probabilities = Eigen::Map<const Eigen::VectorXd>(probs.data(), static_cast<Index>(probs.size()));
    r.layer = doc.at("layer").get<int>();
    r.percentile = doc.at("percentile").get<double>();
    r.top_m = doc.at("top_m").get<int>();
    r.frames = doc.at("frames").get<std::vector<int>>();
    for (const auto& f : doc.at("filters")) {
      FilterReport fr;
      fr.layer = f.at("layer").get<int>();
      fr.filter = f.at("id").get<int>();
      fr.peak_frame = f.at("peak_frame").get<int>();
      fr.peak_value = f.at("peak_value").get<double>();
      fr.trace = trace_from_json(f.at("trace"));
      for (const auto& l : f.at("leaves")) fr.leaves.push_back({leaf_from_json(l), profile_from_json(l.at("profile"))});
      fr.joint_energies = energies_from_json(f.at("joint_energies"));
      for (const auto& v : f.at("timeline")) {
        fr.timeline.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
      }
      r.filters.push_back(std::move(fr));
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report JSON: ") + e.what());
  }
}

std::string report_to_svg(const ExplanationReport& report) {
  constexpr double width = 640, height = 320, margin = 40;
  constexpr const char* colors[] = {"#2ca02c", "#ffbf00", "#1f77b4", "#d62728", "#9467bd", "#8c564b"};
  double top = 0.0;
  for (const auto& f : report.filters) {
    for (const auto& v : f.timeline) top = std::max(top, v.value_or(0.0));
  }
  if (top <= 0.0) top = 1.0;
  int first = report.frames.empty() ? 0 : report.frames.front();
  int last = report.frames.empty() ? 1 : std::max(report.frames.back(), first + 1);

  std::ostringstream svg;
  char buf[128];
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "  <line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  svg << "  <line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\"" << height - margin
      << "\" stroke=\"black\"/>\n";
  svg << "  <text x=\"" << width / 2 << "\" y=\"" << height - 8 << "\" text-anchor=\"middle\">frame</text>\n";
  for (std::size_t i = 0; i < report.filters.size(); ++i) {
    const auto& f = report.filters[i];
    svg << "  <polyline fill=\"none\" stroke=\"" << colors[i % 6] << "\" data-layer=\"" << f.layer
        << "\" data-filter=\"" << f.filter << "\" points=\"";
    for (std::size_t r = 0; r < f.timeline.size() && r < report.frames.size(); ++r) {
      const double x = margin + (width - 2 * margin) * (report.frames[r] - first) / double(last - first);
      const double y = height - margin - (height - 2 * margin) * std::max(0.0, f.timeline[r].value_or(0.0)) / top;
      std::snprintf(buf, sizeof(buf), "%s%.2f,%.2f", r == 0 ? "" : " ", x, y);
      svg << buf;
    }
    svg << "\"/>\n";
    svg << "  <text x=\"" << width - margin << "\" y=\"" << margin + 14 * i << "\" text-anchor=\"end\" fill=\""
        << colors[i % 6] << "\">layer " << f.layer << " filter " << f.filter << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void render_report(const ExplanationReport& report, const std::filesystem::path& json_path,
                   const std::optional<std::filesystem::path>& svg_path) {
  auto write = [](const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << body;
    if (!out) throw IoError("short write to " + path.string());
  };
  write(json_path, report_to_json(report));
  if (svg_path) write(*svg_path, report_to_svg(report));
}

}  // namespace restcn
