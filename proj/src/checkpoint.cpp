#include "restcn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace restcn {

namespace {

constexpr char kMagic[4] = {'R', 'T', 'C', 'N'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) { out_.append(static_cast<const char*>(data), n); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_) + " while reading " + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  void magic() {
    need(4, "magic");
    if (std::memcmp(data_.data(), kMagic, 4) != 0) throw CheckpointError("not a checkpoint: bad magic");
    pos_ += 4;
  }
  bool done() const { return pos_ == data_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

void write_layer(Writer& w, const LayerSpec& spec) {
  w.u32(static_cast<std::uint32_t>(spec.filters));
  w.u32(static_cast<std::uint32_t>(spec.length));
  w.u32(static_cast<std::uint32_t>(spec.stride));
}

LayerSpec read_layer(Reader& r) {
  LayerSpec spec;
  spec.filters = static_cast<int>(r.u32("layer filters"));
  spec.length = static_cast<int>(r.u32("layer length"));
  spec.stride = static_cast<int>(r.u32("layer stride"));
  return spec;
}

// Caps prevent absurd allocations from corrupt headers.
constexpr std::uint32_t kMaxUnits = 1u << 12;
constexpr std::uint32_t kMaxLayerSize = 1u << 16;

}  // namespace

std::string encode_checkpoint(const ResTcnModel& model) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  const ModelConfig& c = model.config;
  w.u32(static_cast<std::uint32_t>(c.input_dim));
  w.u32(static_cast<std::uint32_t>(c.num_classes));
  w.f64(c.dropout_rate);
  w.f64(c.l1_weight);
  write_layer(w, c.first_conv);
  w.u32(static_cast<std::uint32_t>(c.residual_units.size()));
  for (const auto& unit : c.residual_units) write_layer(w, unit);

  // tensors() needs a mutable reference only to hand out spans.
  Parameters& params = const_cast<Parameters&>(model.params);
  const auto views = tensors(params);
  w.u32(static_cast<std::uint32_t>(views.size()));
  auto write_matrix = [&w](const auto& m, bool vector) {
    if (vector) {
      w.u32(1);
      w.u64(static_cast<std::uint64_t>(m.size()));
    } else {
      w.u32(2);
      w.u64(static_cast<std::uint64_t>(m.rows()));
      w.u64(static_cast<std::uint64_t>(m.cols()));
    }
    for (Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
  };
  auto write_bank = [&](const ConvFilterBank<double>& bank) {
    write_matrix(bank.weights, false);
    write_matrix(bank.bias, true);
  };
  write_bank(params.first);
  for (const auto& unit : params.units) {
    write_bank(unit.branch);
    if (unit.projection) write_bank(*unit.projection);
  }
  write_matrix(params.head_weights, false);
  write_matrix(params.head_bias, true);
  return w.take();
}

ResTcnModel decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.magic();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  ModelConfig config;
  config.input_dim = static_cast<int>(r.u32("input_dim"));
  config.num_classes = static_cast<int>(r.u32("num_classes"));
  config.dropout_rate = r.f64("dropout_rate");
  config.l1_weight = r.f64("l1_weight");
  config.first_conv = read_layer(r);
  const std::uint32_t unit_count = r.u32("unit count");
  if (unit_count > kMaxUnits) throw CheckpointError("implausible residual unit count " + std::to_string(unit_count));
  config.residual_units.clear();
  for (std::uint32_t i = 0; i < unit_count; ++i) config.residual_units.push_back(read_layer(r));
  auto check_size = [](int v, const char* what) {
    if (v < 1 || static_cast<std::uint32_t>(v) > kMaxLayerSize) {
      throw CheckpointError(std::string("implausible ") + what + " in checkpoint config");
    }
  };
  check_size(config.input_dim, "input_dim");
  check_size(config.num_classes, "num_classes");
  auto check_layer = [&](const LayerSpec& spec) {
    check_size(spec.filters, "filters");
    check_size(spec.length, "length");
    check_size(spec.stride, "stride");
  };
  check_layer(config.first_conv);
  for (const auto& spec : config.residual_units) check_layer(spec);
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid config in checkpoint: ") + e.what());
  }

  // Build a zero model with the right shapes, then fill it tensor by tensor.
  ResTcnModel model = build_model(config, 0);
  model.params = model.params.zeros_like();
  const std::uint32_t count = r.u32("tensor count");
  auto views = tensors(model.params);
  if (count != views.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                          std::to_string(views.size()));
  }

  auto read_matrix = [&r](auto& m, bool vector, const std::string& name) {
    const std::uint32_t rank = r.u32("tensor rank");
    std::uint64_t rows = 0, cols = 1;
    if (rank == 1 && vector) {
      rows = r.u64("tensor dims");
    } else if (rank == 2 && !vector) {
      rows = r.u64("tensor dims");
      cols = r.u64("tensor dims");
    } else {
      throw CheckpointError("tensor " + name + " has unexpected rank " + std::to_string(rank));
    }
    if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols())) {
      throw CheckpointError("tensor " + name + " shape does not match config");
    }
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64("tensor values");
  };
  auto read_bank = [&](ConvFilterBank<double>& bank, const std::string& name) {
    read_matrix(bank.weights, false, name + ".weights");
    read_matrix(bank.bias, true, name + ".bias");
  };
  read_bank(model.params.first, "conv1");
  for (std::size_t i = 0; i < model.params.units.size(); ++i) {
    const std::string name = "unit" + std::to_string(i + 2);
    read_bank(model.params.units[i].branch, name + ".branch");
    if (model.params.units[i].projection) read_bank(*model.params.units[i].projection, name + ".projection");
  }
  read_matrix(model.params.head_weights, false, "head.weights");
  read_matrix(model.params.head_bias, true, "head.bias");
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint at offset " + std::to_string(r.pos()));
  model.check_consistency();
  return model;
}

void save_checkpoint(const ResTcnModel& model, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(model);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ResTcnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

}  // namespace restcn
