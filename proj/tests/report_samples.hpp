#pragma once

#include <random>

#include "restcn/interpret.hpp"
#include "restcn/synth.hpp"

namespace testing {

// A real explain() report from a small random model on a synthetic
// sequence; shapes vary with `seed`.
inline restcn::ExplanationReport sample_report(std::uint64_t seed) {
  using namespace restcn;
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  ModelConfig c;
  c.num_classes = pick(2, 6);
  const int filters = pick(2, 8);
  c.first_conv = {filters, pick(1, 5), 1};
  c.residual_units.assign(static_cast<std::size_t>(pick(0, 3)), LayerSpec{filters, pick(1, 5), 1});
  const ResTcnModel model = build_model(c, rng());

  SynthOptions so;
  so.min_frames = 12;
  so.max_frames = 30;
  const auto data = synth_generate(pick(1, kMotifCount), 1, rng(), so);
  const auto& seq = data.sequences.back();

  ExplainOptions o;
  o.percentile = std::uniform_real_distribution<double>(1.0, 99.0)(rng);
  o.top_n = pick(0, 4);
  o.top_m = pick(1, 3);
  o.layer = pick(1, c.layers());
  o.leaves_per_filter = pick(1, 3);
  return explain(model, to_temporal_map(seq), seq.info, o);
}

}  // namespace testing
