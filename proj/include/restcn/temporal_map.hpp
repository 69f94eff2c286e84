#pragma once

#include <Eigen/Dense>

#include <string>

#include "restcn/errors.hpp"

namespace restcn {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// true = valid frame.
using FrameMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// A frames x channels activation map with a per-frame validity mask.
///
/// Masked frames behave as zero padding: every operation ignores their
/// contents and produces zeros in them.
template <typename Scalar>
struct TemporalMap {
  Matrix<Scalar> data;
  FrameMask mask;

  TemporalMap() = default;

  explicit TemporalMap(Matrix<Scalar> values)
      : data(std::move(values)), mask(FrameMask::Constant(data.rows(), true)) {}

  TemporalMap(Matrix<Scalar> values, FrameMask frame_mask)
      : data(std::move(values)), mask(std::move(frame_mask)) {
    if (mask.size() != data.rows()) {
      throw DimensionError("frame mask length " + std::to_string(mask.size()) +
                           " does not match " + std::to_string(data.rows()) + " frames");
    }
  }

  static TemporalMap zeros(Index frames, Index channels) {
    return TemporalMap(Matrix<Scalar>::Zero(frames, channels));
  }

  Index frames() const { return data.rows(); }
  Index channels() const { return data.cols(); }
  Index valid_frames() const { return mask.count(); }
  bool fully_valid() const { return mask.all(); }
};

using Map = TemporalMap<double>;

/// Validates the basic shape invariants of a map used as operation input.
template <typename Scalar>
void require_nonempty(const TemporalMap<Scalar>& map, const char* op) {
  if (map.frames() < 1 || map.channels() < 1) {
    throw DomainError(std::string(op) + ": empty input map");
  }
  if (map.mask.size() != map.frames()) {
    throw DimensionError(std::string(op) + ": mask length does not match frames");
  }
  if (!map.mask.any()) {
    throw DomainError(std::string(op) + ": input has no valid frames");
  }
}

template <typename Scalar>
bool same_shape(const TemporalMap<Scalar>& a, const TemporalMap<Scalar>& b) {
  return a.frames() == b.frames() && a.channels() == b.channels();
}

/// Copy of `map.data` with masked rows set to zero.
template <typename Scalar>
Matrix<Scalar> masked_values(const TemporalMap<Scalar>& map) {
  Matrix<Scalar> out = map.data;
  for (Index t = 0; t < map.frames(); ++t) {
    if (!map.mask(t)) out.row(t).setZero();
  }
  return out;
}

/// A bank of N 1-D temporal filters of length f over C_in channels.
///
/// Weights are stored as an N x (f * C_in) matrix; the block of columns
/// [tau * C_in, (tau + 1) * C_in) holds tap tau of every filter, so one tap
/// applied to a T x C_in map is a single GEMM.
template <typename Scalar>
struct ConvFilterBank {
  Matrix<Scalar> weights;
  Vector<Scalar> bias;
  Index length = 1;
  Index stride = 1;

  ConvFilterBank() = default;

  ConvFilterBank(Index num_filters, Index filter_length, Index in_channels, Index stride_ = 1)
      : weights(Matrix<Scalar>::Zero(num_filters, filter_length * in_channels)),
        bias(Vector<Scalar>::Zero(num_filters)),
        length(filter_length),
        stride(stride_) {
    if (num_filters < 1 || filter_length < 1 || in_channels < 1 || stride_ < 1) {
      throw ConfigError("filter bank needs filters, length, channels and stride >= 1");
    }
  }

  Index filters() const { return weights.rows(); }
  Index in_channels() const { return length > 0 ? weights.cols() / length : 0; }

  auto tap(Index tau) { return weights.middleCols(tau * in_channels(), in_channels()); }
  auto tap(Index tau) const { return weights.middleCols(tau * in_channels(), in_channels()); }

  Scalar& at(Index filter, Index tau, Index channel) {
    return weights(filter, tau * in_channels() + channel);
  }
  Scalar at(Index filter, Index tau, Index channel) const {
    return weights(filter, tau * in_channels() + channel);
  }

  /// Filter k as an f x C_in matrix (taps down, channels across).
  Matrix<Scalar> filter(Index k) const {
    Matrix<Scalar> out(length, in_channels());
    for (Index tau = 0; tau < length; ++tau) out.row(tau) = tap(tau).row(k);
    return out;
  }

  bool same_shape(const ConvFilterBank& other) const {
    return weights.rows() == other.weights.rows() && weights.cols() == other.weights.cols() &&
           length == other.length && stride == other.stride;
  }
};

/// Gradients of a scalar loss with respect to one convolution's parameters
/// and its input.
template <typename Scalar>
struct ConvGradients {
  Matrix<Scalar> weights;
  Vector<Scalar> bias;
  TemporalMap<Scalar> input;
};

}  // namespace restcn
