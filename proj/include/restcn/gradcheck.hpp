#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace restcn {

struct GradcheckOptions {
  std::uint64_t seed = 7;
  int cases = 100;  ///< random cases per operation
  int model_cases = 10;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Tiny end-to-end model.
  int input_dim = 4;
  int filters = 3;
  int filter_length = 3;
  int units = 2;
  int classes = 3;
  int frames = 8;
  /// Negative control: corrupts the analytic conv weight gradient so the
  /// check must fail.
  bool perturb_backward = false;
};

struct GradcheckEntry {
  std::string name;  ///< e.g. "conv1d.weights", "model.head"
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  ///< location of the largest error
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double tolerance = 1e-4;

  bool passed() const;
};

/// |a - n| / max(|a|, |n|, 1e-7).
double relative_error(double analytic, double numeric);

/// Central finite differences against every analytic backward: each
/// numerics op on random small cases, then every parameter of tiny
/// end-to-end models (identity and projected skips, dropout active).
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace restcn
