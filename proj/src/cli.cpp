#include "restcn/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "restcn/checkpoint.hpp"
#include "restcn/dataset.hpp"
#include "restcn/errors.hpp"
#include "restcn/gradcheck.hpp"
#include "restcn/interpret.hpp"
#include "restcn/report.hpp"
#include "restcn/synth.hpp"
#include "restcn/train.hpp"

namespace restcn {

namespace {

namespace fs = std::filesystem;

struct SettingDef {
  const char* key;
  const char* fallback;
  const char* help;
  bool flag = false;
};

// Keys shared by commands that load a dataset.
constexpr SettingDef kDataSettings[] = {
    {"seed", "0", "seed for initialization, shuffling and dropout"},
    {"data", "", "directory of NTU .skeleton files"},
    {"synth", "false", "use the generated planted-motif dataset instead of --data", true},
    {"classes", "", "number of classes; NTU keeps actions 1..k (default: 4 synthetic, 60 NTU)"},
    {"per_class", "70", "synthetic sequences per class"},
    {"synth_seed", "1", "seed of the synthetic dataset"},
    {"split", "cs", "cs (cross-subject) or cv (cross-view)"},
    {"train_ids", "", "comma-separated train subject/camera ids (default: standard protocol)"},
};

constexpr SettingDef kTrainSettings[] = {
    {"profile", "interpretable", "interpretable (identity skips) or capacity (64-128-256, strided)"},
    {"filters", "64", "filters per layer (interpretable profile)"},
    {"filter_length", "8", "temporal filter length (interpretable profile)"},
    {"units", "8", "residual units (interpretable profile)"},
    {"dropout", "0.5", "dropout rate inside residual units"},
    {"lr", "0.01", "initial learning rate"},
    {"momentum", "0.9", "Nesterov momentum"},
    {"l1", "0.0001", "L1 weight on convolution weights"},
    {"batch_size", "128", "minibatch size"},
    {"patience", "10", "plateau epochs before the learning rate drops"},
    {"lr_decay", "10", "learning rate divisor on plateau"},
    {"tolerance", "0.0001", "minimum test-loss improvement"},
    {"epochs", "300", "maximum epochs"},
    {"run_dir", "runs/default", "output directory"},
    {"timing", "false", "record wall-clock seconds per epoch in metrics.csv", true},
};

// Default train ids when none are given. Generated sequences use subjects
// 1..7 and cameras 1..3.
constexpr int kNtuCsTrain[] = {1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38};
constexpr int kNtuCvTrain[] = {2, 3};
constexpr int kSynthCsTrain[] = {1, 2, 3, 4, 5};
constexpr int kSynthCvTrain[] = {2, 3};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

template <typename T>
T parse_number(const Settings& s, const std::string& key) {
  const std::string& text = s.at(key);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("invalid value for " + key + ": '" + text + "'");
  }
  return value;
}

bool parse_bool(const Settings& s, const std::string& key) {
  const std::string& text = s.at(key);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no" || text.empty()) return false;
  throw ConfigError("invalid boolean for " + key + ": '" + text + "'");
}

std::set<int> parse_ids(const std::string& text) {
  std::set<int> ids;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    int v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size()) throw ConfigError("invalid id in train_ids: " + item);
    ids.insert(v);
  }
  return ids;
}

std::string join_ids(const std::set<int>& ids) {
  std::string out;
  for (int id : ids) out += (out.empty() ? "" : ",") + std::to_string(id);
  return out;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// Options registered on one subcommand; values captured as text so file and
// flag sources merge the same way.
struct Bindings {
  std::map<std::string, std::string> text;
  std::map<std::string, bool> flags;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  std::string config_file;
  CLI::Option* config_option = nullptr;

  template <std::size_t N>
  void add(CLI::App* app, const SettingDef (&defs)[N]) {
    for (const auto& d : defs) {
      CLI::Option* opt = d.flag ? app->add_flag(dashed(d.key), flags[d.key], d.help)
                                : app->add_option(dashed(d.key), text[d.key], d.help);
      options.emplace_back(d.key, opt);
    }
  }

  void add_config(CLI::App* app) {
    config_option = app->add_option("--config", config_file, "flat key = value file; flags override it");
  }

  Settings resolve() const {
    Settings s = default_settings();
    if (config_option && config_option->count() > 0) {
      for (auto& [k, v] : read_settings_file(config_file)) s[k] = v;
    }
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      if (flags.count(key)) {
        s[key] = flags.at(key) ? "true" : "false";
      } else {
        s[key] = text.at(key);
      }
    }
    return s;
  }
};

struct Dataset {
  std::vector<SkeletonSequence> sequences;
  std::vector<Sample> train;
  std::vector<Sample> test;
  int classes = 0;
};

// Fills in derived keys (classes, train_ids) and checks the data source
// before anything is loaded or written.
void resolve_data_settings(Settings& s) {
  const bool synth = parse_bool(s, "synth");
  if (synth == !s.at("data").empty()) throw ConfigError("give exactly one of --synth or --data");
  if (!synth && !fs::is_directory(s.at("data"))) throw ConfigError("data directory not found: " + s.at("data"));
  if (s.at("classes").empty()) s["classes"] = synth ? "4" : "60";
  const int classes = parse_number<int>(s, "classes");
  if (classes < 2) throw ConfigError("classes must be >= 2");
  if (synth && classes > kMotifCount) throw ConfigError("synthetic data has at most 6 classes");
  if (!synth && classes > 60) throw ConfigError("NTU RGB+D has 60 classes");
  if (parse_number<int>(s, "per_class") < 1) throw ConfigError("per_class must be >= 1");
  parse_number<std::uint64_t>(s, "seed");
  parse_number<std::uint64_t>(s, "synth_seed");

  const std::string& split = s.at("split");
  if (split != "cs" && split != "cv") throw ConfigError("split must be cs or cv");
  if (s.at("train_ids").empty()) {
    std::set<int> ids;
    if (split == "cs") {
      if (synth) ids.insert(std::begin(kSynthCsTrain), std::end(kSynthCsTrain));
      else ids.insert(std::begin(kNtuCsTrain), std::end(kNtuCsTrain));
    } else {
      if (synth) ids.insert(std::begin(kSynthCvTrain), std::end(kSynthCvTrain));
      else ids.insert(std::begin(kNtuCvTrain), std::end(kNtuCvTrain));
    }
    s["train_ids"] = join_ids(ids);
  }
  if (parse_ids(s.at("train_ids")).empty()) throw ConfigError("train_ids is empty");
}

Dataset load_dataset(const Settings& s) {
  Dataset d;
  d.classes = parse_number<int>(s, "classes");
  if (parse_bool(s, "synth")) {
    d.sequences = synth_generate(d.classes, parse_number<int>(s, "per_class"),
                                 parse_number<std::uint64_t>(s, "synth_seed"))
                      .sequences;
  } else {
    for (auto& seq : load_skeleton_dir(s.at("data"))) {
      if (seq.info.label < 0) throw DataError(seq.info.source + ": file name carries no action label");
      if (seq.info.label < d.classes) d.sequences.push_back(std::move(seq));
    }
    if (d.sequences.empty()) throw DataError("no usable .skeleton files in " + s.at("data"));
  }
  SplitSpec spec{s.at("split") == "cs" ? SplitMode::CrossSubject : SplitMode::CrossView,
                 parse_ids(s.at("train_ids"))};
  const SplitIndices split = make_split(d.sequences, spec);
  for (std::size_t i : split.train) d.train.push_back({to_temporal_map(d.sequences[i]), d.sequences[i].info.label});
  for (std::size_t i : split.test) d.test.push_back({to_temporal_map(d.sequences[i]), d.sequences[i].info.label});
  if (d.test.empty()) throw ConfigError("split leaves no test samples");
  return d;
}

ModelConfig model_config(const Settings& s, int classes) {
  const std::string& profile = s.at("profile");
  ModelConfig config;
  if (profile == "interpretable") {
    const int filters = parse_number<int>(s, "filters");
    const int length = parse_number<int>(s, "filter_length");
    const int units = parse_number<int>(s, "units");
    if (units < 0) throw ConfigError("units must be >= 0");
    config = ModelConfig::interpretable_profile(kFeatureDim, classes);
    config.first_conv = {filters, length, 1};
    config.residual_units.assign(static_cast<std::size_t>(units), LayerSpec{filters, length, 1});
  } else if (profile == "capacity") {
    config = ModelConfig::capacity_profile(kFeatureDim, classes);
  } else {
    throw ConfigError("profile must be interpretable or capacity");
  }
  config.dropout_rate = parse_number<double>(s, "dropout");
  config.l1_weight = parse_number<double>(s, "l1");
  config.validate();
  return config;
}

TrainConfig train_config(const Settings& s) {
  TrainConfig t;
  t.lr0 = parse_number<double>(s, "lr");
  t.momentum = parse_number<double>(s, "momentum");
  t.l1_weight = parse_number<double>(s, "l1");
  t.batch_size = parse_number<int>(s, "batch_size");
  t.plateau_patience = parse_number<int>(s, "patience");
  t.lr_decay_factor = parse_number<double>(s, "lr_decay");
  t.plateau_tolerance = parse_number<double>(s, "tolerance");
  t.max_epochs = parse_number<int>(s, "epochs");
  t.seed = parse_number<std::uint64_t>(s, "seed");
  t.validate();
  return t;
}

int cmd_train(Settings s, std::ostream& out) {
  resolve_data_settings(s);
  const ModelConfig mc = model_config(s, parse_number<int>(s, "classes"));
  const TrainConfig tc = train_config(s);
  const bool timing = parse_bool(s, "timing");
  if (s.at("run_dir").empty()) throw ConfigError("run_dir is empty");

  const Dataset data = load_dataset(s);
  const fs::path run_dir = s.at("run_dir");
  fs::create_directories(run_dir / "reports");
  {
    std::ofstream cfg(run_dir / "config.resolved", std::ios::trunc);
    cfg << format_settings(s);
    if (!cfg) throw IoError("cannot write " + (run_dir / "config.resolved").string());
  }
  out << "train " << data.train.size() << " / test " << data.test.size() << " sequences, " << data.classes
      << " classes\n";

  TrainOptions options;
  options.run_dir = run_dir;
  options.record_time = timing;
  options.on_epoch = [&](const EpochMetrics& m) {
    out << "epoch " << m.epoch << "  train_loss " << fixed4(m.train_loss) << "  train_acc " << fixed4(m.train_acc)
        << "  test_loss " << fixed4(m.test_loss) << "  test_acc " << fixed4(m.test_acc) << "  lr " << m.lr << '\n'
        << std::flush;
  };
  const TrainResult result = train(build_model(mc, tc.seed), data.train, data.test, tc, options);
  if (result.best_epoch > 0) {
    const auto& best = result.history[static_cast<std::size_t>(result.best_epoch - 1)];
    out << "best epoch " << result.best_epoch << "  test_acc " << fixed4(best.test_acc) << '\n';
  }
  out << "wrote " << run_dir.string() << '\n';
  return kExitOk;
}

int cmd_eval(Settings s, const std::string& checkpoint, std::string confusion_path, const std::string& subset,
             std::ostream& out) {
  if (subset != "test" && subset != "train" && subset != "all") throw ConfigError("subset must be test, train or all");
  resolve_data_settings(s);
  const ResTcnModel model = load_checkpoint(checkpoint);
  const Dataset data = load_dataset(s);
  if (model.config.input_dim != kFeatureDim) throw DataError("checkpoint does not read skeleton features");
  std::vector<Sample> samples;
  if (subset != "train") samples.insert(samples.end(), data.test.begin(), data.test.end());
  if (subset != "test") samples.insert(samples.end(), data.train.begin(), data.train.end());
  for (const auto& sample : samples) {
    if (sample.label >= model.config.num_classes) {
      throw DataError("label " + std::to_string(sample.label) + " outside the checkpoint's " +
                      std::to_string(model.config.num_classes) + " classes");
    }
  }
  const EvalResult r = evaluate(model, samples);

  if (confusion_path.empty()) confusion_path = (fs::path(checkpoint).parent_path() / "confusion.csv").string();
  std::ofstream csv(confusion_path, std::ios::trunc);
  csv << "true\\predicted";
  for (Index k = 0; k < r.confusion.cols(); ++k) csv << ',' << k;
  csv << '\n';
  for (Index i = 0; i < r.confusion.rows(); ++i) {
    csv << i;
    for (Index k = 0; k < r.confusion.cols(); ++k) csv << ',' << r.confusion(i, k);
    csv << '\n';
  }
  if (!csv) throw IoError("cannot write " + confusion_path);

  out << "samples: " << samples.size() << '\n';
  out << "loss: " << fixed4(r.mean_loss) << '\n';
  out << "accuracy: " << fixed4(r.accuracy) << '\n';
  return kExitOk;
}

struct ExplainArgs {
  std::string checkpoint;
  std::string sequence;
  std::string out;
  bool svg = false;
  int layer = -1;
  double percentile = 80.0;
  int top_m = 3;
  int top_n = 3;
  int max_depth = -1;
  bool force = false;
};

int cmd_explain(const ExplainArgs& a, std::ostream& out, std::ostream& err) {
  if (!(a.percentile > 0.0 && a.percentile < 100.0)) throw ConfigError("--percentile must lie in (0, 100)");
  if (a.top_m < 1) throw ConfigError("--top-m must be >= 1");
  if (a.top_n < 1) throw ConfigError("--top-n must be >= 1");
  const ResTcnModel model = load_checkpoint(a.checkpoint);
  if (a.layer != -1 && (a.layer < 1 || a.layer > model.config.layers())) {
    throw ConfigError("--layer must lie in [1, " + std::to_string(model.config.layers()) + "]");
  }
  if (!model.config.interpretable()) {
    if (!a.force) throw InterpretabilityRefused("checkpoint uses the capacity profile; pass --force to trace anyway");
    err << "warning: projected skip paths; deep filters are not additive offsets of the first layer and the trace "
           "is only indicative\n";
  }
  const SkeletonSequence seq = parse_skeleton_file(a.sequence);
  if (model.config.input_dim != kFeatureDim) throw DataError("checkpoint does not read skeleton features");

  ExplainOptions opts;
  opts.layer = a.layer;
  opts.percentile = a.percentile;
  opts.top_m = a.top_m;
  opts.top_n = a.top_n;
  opts.max_depth = a.max_depth;
  opts.force = a.force;
  const ExplanationReport report = explain(model, to_temporal_map(seq), seq.info, opts);

  fs::path json_path = a.out;
  if (json_path.empty()) {
    json_path = fs::path(a.checkpoint).parent_path() / "reports" / (fs::path(a.sequence).stem().string() + ".json");
  }
  if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
  std::optional<fs::path> svg_path;
  if (a.svg) svg_path = fs::path(json_path).replace_extension(".svg");
  render_report(report, json_path, svg_path);

  out << "predicted class " << report.predicted << " (p = " << fixed4(report.probability) << ")";
  if (seq.info.label >= 0) out << ", labelled " << seq.info.label;
  out << '\n';
  for (const auto& f : report.filters) {
    int actor = 0, joint = 0;
    f.joint_energies.maxCoeff(&actor, &joint);
    out << "layer " << f.layer << " filter " << f.filter << ": peak " << fixed4(f.peak_value) << " at frame "
        << f.peak_frame << ", " << f.trace.leaves.size() << " leaves";
    if (!f.leaves.empty()) {
      out << ", strongest joint " << joint_key(actor, joint) << " (" << joint_name(joint) << ", "
          << fixed4(f.joint_energies(actor, joint)) << ")";
    }
    out << '\n';
  }
  out << "wrote " << json_path.string();
  if (svg_path) out << " and " << svg_path->string();
  out << '\n';
  return kExitOk;
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out) {
  const GradcheckReport report = run_gradcheck(options);
  char line[256];
  for (const auto& e : report.entries) {
    std::snprintf(line, sizeof(line), "%-30s max_rel_error %.3e  (%zu checked)\n", e.name.c_str(), e.max_rel_error,
                  e.checked);
    out << line;
  }
  if (report.passed()) {
    out << "gradcheck passed (tolerance " << report.tolerance << ")\n";
    return kExitOk;
  }
  out << "gradcheck FAILED (tolerance " << report.tolerance << "):\n";
  for (const auto& e : report.entries) {
    if (e.max_rel_error >= report.tolerance) out << "  " << e.name << " worst at " << e.worst << '\n';
  }
  return kExitCheckFailed;
}

int cmd_synth(const std::string& dir, int classes, int per_class, std::uint64_t seed, std::ostream& out) {
  if (dir.empty()) throw ConfigError("--out is required");
  if (classes < 1 || classes > kMotifCount) throw ConfigError("--classes must lie in [1, 6]");
  if (per_class < 1) throw ConfigError("--per-class must be >= 1");
  const SyntheticDataset data = synth_generate(classes, per_class, seed);
  fs::create_directories(dir);
  write_synthetic(data, dir);
  out << "wrote " << data.sequences.size() << " sequences to " << dir << '\n';
  return kExitOk;
}

}  // namespace

const Settings& default_settings() {
  static const Settings defaults = [] {
    Settings s;
    for (const auto& d : kDataSettings) s[d.key] = d.fallback;
    for (const auto& d : kTrainSettings) s[d.key] = d.fallback;
    return s;
  }();
  return defaults;
}

Settings read_settings_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  Settings s;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = trim(raw.substr(0, raw.find('#')));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    const std::string where = path.string() + ":" + std::to_string(line) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(std::string_view(text).substr(0, eq));
    if (!default_settings().count(key)) throw ConfigError(where + "unknown key '" + key + "'");
    s[key] = trim(std::string_view(text).substr(eq + 1));
  }
  return s;
}

std::string format_settings(const Settings& settings) {
  std::string out;
  for (const auto& [k, v] : settings) out += k + " = " + v + "\n";
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Res-TCN skeleton action recognition: train, evaluate and explain temporal convolutional models"};
  app.name("restcn");
  app.require_subcommand(1);

  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write a run directory");
  Bindings train_b;
  train_b.add_config(train_cmd);
  train_b.add(train_cmd, kDataSettings);
  train_b.add(train_cmd, kTrainSettings);

  CLI::App* eval_cmd = app.add_subcommand("eval", "accuracy and confusion matrix of a checkpoint");
  Bindings eval_b;
  std::string eval_checkpoint, eval_confusion, eval_subset = "test";
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--confusion", eval_confusion, "confusion CSV path (default: next to the checkpoint)");
  eval_cmd->add_option("--subset", eval_subset, "test, train or all");
  eval_b.add_config(eval_cmd);
  eval_b.add(eval_cmd, kDataSettings);

  CLI::App* explain_cmd = app.add_subcommand("explain", "explanation report for one sequence");
  ExplainArgs ex;
  explain_cmd->add_option("--checkpoint", ex.checkpoint, "checkpoint file")->required();
  explain_cmd->add_option("--sequence", ex.sequence, ".skeleton file")->required();
  explain_cmd->add_option("--out", ex.out, "report JSON path (default: <checkpoint dir>/reports/<sequence>.json)");
  explain_cmd->add_flag("--svg", ex.svg, "also write an SVG timeline next to the JSON");
  explain_cmd->add_option("--layer", ex.layer, "inspected layer, 1-based (default: last)");
  explain_cmd->add_option("--percentile", ex.percentile, "per-frame percentile threshold");
  explain_cmd->add_option("--top-m", ex.top_m, "inputs followed per traced filter");
  explain_cmd->add_option("--top-n", ex.top_n, "filters reported");
  explain_cmd->add_option("--max-depth", ex.max_depth, "trace depth limit (default: down to layer 1)");
  explain_cmd->add_flag("--force", ex.force, "trace capacity-profile models anyway");

  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  GradcheckOptions gc;
  grad_cmd->add_option("--seed", gc.seed, "random seed");
  grad_cmd->add_option("--cases", gc.cases, "random cases per operation");
  grad_cmd->add_option("--model-cases", gc.model_cases, "random end-to-end models");
  grad_cmd->add_flag("--perturb-backward", gc.perturb_backward, "corrupt a gradient (test hook)")->group("");

  CLI::App* synth_cmd = app.add_subcommand("synth", "write the planted-motif dataset as .skeleton files");
  std::string synth_dir;
  int synth_classes = 4, synth_per_class = 70;
  std::uint64_t synth_seed = 1;
  synth_cmd->add_option("--out", synth_dir, "output directory")->required();
  synth_cmd->add_option("--classes", synth_classes, "number of motif classes (1..6)");
  synth_cmd->add_option("--per-class", synth_per_class, "sequences per class");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");

  std::vector<std::string> storage{"restcn"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_b.resolve(), out);
    if (*eval_cmd) return cmd_eval(eval_b.resolve(), eval_checkpoint, eval_confusion, eval_subset, out);
    if (*explain_cmd) return cmd_explain(ex, out, err);
    if (*grad_cmd) return cmd_gradcheck(gc, out);
    if (*synth_cmd) return cmd_synth(synth_dir, synth_classes, synth_per_class, synth_seed, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const InterpretabilityRefused& e) {
    err << "refused: " << e.what() << '\n';
    return kExitRefused;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  return kExitConfig;
}

}  // namespace restcn
