#pragma once

#include <Eigen/Dense>

#include <vector>

namespace oracle {

// w[k][tau][c]
using FilterTaps = std::vector<std::vector<std::vector<double>>>;

// Same-padded strided 1-D convolution by direct summation. Reads outside
// [0, T) and reads of invalid frames count as zero; output rows whose
// sampled input frame is invalid are zero.
inline Eigen::MatrixXd conv_direct(const Eigen::MatrixXd& x, const std::vector<bool>& valid, const FilterTaps& w,
                                   const std::vector<double>& bias, int stride) {
  const int T = static_cast<int>(x.rows());
  const int C = static_cast<int>(x.cols());
  const int N = static_cast<int>(w.size());
  const int f = static_cast<int>(w[0].size());
  const int Tout = (T + stride - 1) / stride;
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(Tout, N);
  for (int t = 0; t < Tout; ++t) {
    if (!valid[static_cast<std::size_t>(t * stride)]) continue;
    for (int k = 0; k < N; ++k) {
      double acc = bias[static_cast<std::size_t>(k)];
      for (int tau = 0; tau < f; ++tau) {
        const int src = t * stride + tau - f / 2;
        if (src < 0 || src >= T || !valid[static_cast<std::size_t>(src)]) continue;
        for (int c = 0; c < C; ++c) acc += w[k][tau][c] * x(src, c);
      }
      y(t, k) = acc;
    }
  }
  return y;
}

}  // namespace oracle
