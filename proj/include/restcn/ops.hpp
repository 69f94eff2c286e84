#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "restcn/temporal_map.hpp"

namespace restcn {

/// Output frame count of a same-padded convolution.
inline Index conv_output_frames(Index frames, Index stride) { return (frames + stride - 1) / stride; }

inline FrameMask downsample_mask(const FrameMask& mask, Index stride) {
  FrameMask out(conv_output_frames(mask.size(), stride));
  for (Index t = 0; t < out.size(); ++t) out(t) = mask(t * stride);
  return out;
}

namespace detail {

// Calls fn(out_begin, in_begin, count) for each run of output rows whose
// source rows for tap `tau` lie inside [0, frames). Stride 1 yields a single
// contiguous run; larger strides yield one row per call.
template <typename Fn>
void for_each_tap_run(Index frames, Index out_frames, Index stride, Index offset, Fn&& fn) {
  if (stride == 1) {
    const Index begin = std::max<Index>(0, -offset);
    const Index end = std::min<Index>(out_frames, frames - offset);
    if (end > begin) fn(begin, begin + offset, end - begin);
    return;
  }
  for (Index t = 0; t < out_frames; ++t) {
    const Index src = t * stride + offset;
    if (src >= 0 && src < frames) fn(t, src, Index{1});
  }
}

template <typename Scalar>
void zero_masked_rows(Matrix<Scalar>& values, const FrameMask& mask) {
  for (Index t = 0; t < values.rows(); ++t) {
    if (!mask(t)) values.row(t).setZero();
  }
}

}  // namespace detail

/// Same-padded temporal convolution:
///   out[t, k] = sum_{tau, c} W[k, tau, c] * in[t * stride + tau - f / 2, c] + b[k]
/// Frames outside the sequence and masked frames read as zero. The output
/// mask is the input mask sampled at every `stride`-th frame and masked
/// output rows are zero.
template <typename Scalar>
TemporalMap<Scalar> conv1d_forward(const TemporalMap<Scalar>& input,
                                   const ConvFilterBank<Scalar>& filters) {
  require_nonempty(input, "conv1d_forward");
  if (input.channels() != filters.in_channels()) {
    throw DimensionError("conv1d_forward: input has " + std::to_string(input.channels()) +
                         " channels, filters expect " + std::to_string(filters.in_channels()));
  }
  const Index frames = input.frames();
  const Index out_frames = conv_output_frames(frames, filters.stride);
  const Index pad = filters.length / 2;
  const Matrix<Scalar> x = input.fully_valid() ? input.data : masked_values(input);

  Matrix<Scalar> out = Matrix<Scalar>::Zero(out_frames, filters.filters());
  for (Index tau = 0; tau < filters.length; ++tau) {
    const auto tap = filters.tap(tau);
    detail::for_each_tap_run(frames, out_frames, filters.stride, tau - pad,
                             [&](Index dst, Index src, Index count) {
                               out.middleRows(dst, count).noalias() +=
                                   x.middleRows(src, count) * tap.transpose();
                             });
  }
  out.rowwise() += filters.bias.transpose();

  FrameMask mask = downsample_mask(input.mask, filters.stride);
  detail::zero_masked_rows(out, mask);
  return TemporalMap<Scalar>(std::move(out), std::move(mask));
}

/// Gradients of conv1d_forward given dL/d(output).
template <typename Scalar>
ConvGradients<Scalar> conv1d_backward(const TemporalMap<Scalar>& input,
                                      const ConvFilterBank<Scalar>& filters,
                                      const TemporalMap<Scalar>& upstream) {
  require_nonempty(input, "conv1d_backward");
  if (input.channels() != filters.in_channels()) {
    throw DimensionError("conv1d_backward: input/filter channel mismatch");
  }
  const Index frames = input.frames();
  const Index out_frames = conv_output_frames(frames, filters.stride);
  if (upstream.frames() != out_frames || upstream.channels() != filters.filters()) {
    throw DimensionError("conv1d_backward: upstream shape does not match forward output");
  }
  const Index pad = filters.length / 2;
  const Index in_channels = filters.in_channels();
  const Matrix<Scalar> x = input.fully_valid() ? input.data : masked_values(input);
  Matrix<Scalar> g = upstream.data;
  detail::zero_masked_rows(g, downsample_mask(input.mask, filters.stride));

  ConvGradients<Scalar> grads;
  grads.weights = Matrix<Scalar>::Zero(filters.weights.rows(), filters.weights.cols());
  grads.bias = g.colwise().sum().transpose();
  Matrix<Scalar> dx = Matrix<Scalar>::Zero(frames, in_channels);
  for (Index tau = 0; tau < filters.length; ++tau) {
    const auto tap = filters.tap(tau);
    auto dtap = grads.weights.middleCols(tau * in_channels, in_channels);
    detail::for_each_tap_run(frames, out_frames, filters.stride, tau - pad,
                             [&](Index dst, Index src, Index count) {
                               dtap.noalias() += g.middleRows(dst, count).transpose() *
                                                 x.middleRows(src, count);
                               dx.middleRows(src, count).noalias() += g.middleRows(dst, count) * tap;
                             });
  }
  detail::zero_masked_rows(dx, input.mask);
  grads.input = TemporalMap<Scalar>(std::move(dx), input.mask);
  return grads;
}

template <typename Scalar>
TemporalMap<Scalar> relu(const TemporalMap<Scalar>& input) {
  return TemporalMap<Scalar>(input.data.cwiseMax(Scalar(0)), input.mask);
}

/// dL/d(input) of relu; the subgradient at 0 is taken as 0.
template <typename Scalar>
TemporalMap<Scalar> relu_backward(const TemporalMap<Scalar>& input, const TemporalMap<Scalar>& upstream) {
  if (!same_shape(input, upstream)) throw DimensionError("relu_backward: shape mismatch");
  Matrix<Scalar> g = (input.data.array() > Scalar(0)).select(upstream.data.array(), Scalar(0)).matrix();
  return TemporalMap<Scalar>(std::move(g), input.mask);
}

template <typename Scalar>
TemporalMap<Scalar> merge_add(const TemporalMap<Scalar>& a, const TemporalMap<Scalar>& b) {
  if (!same_shape(a, b)) {
    throw DimensionError("merge_add: shapes " + std::to_string(a.frames()) + "x" +
                         std::to_string(a.channels()) + " and " + std::to_string(b.frames()) + "x" +
                         std::to_string(b.channels()) + " differ");
  }
  if ((a.mask != b.mask).any()) throw DimensionError("merge_add: frame masks differ");
  return TemporalMap<Scalar>(a.data + b.data, a.mask);
}

/// Per-channel mean over valid frames.
template <typename Scalar>
Vector<Scalar> global_average_pool(const TemporalMap<Scalar>& input) {
  if (input.frames() < 1 || input.channels() < 1 || !input.mask.any()) {
    throw DomainError("global_average_pool: no valid frames");
  }
  Vector<Scalar> sum = Vector<Scalar>::Zero(input.channels());
  for (Index t = 0; t < input.frames(); ++t) {
    if (input.mask(t)) sum += input.data.row(t).transpose();
  }
  return sum / static_cast<Scalar>(input.valid_frames());
}

template <typename Scalar>
TemporalMap<Scalar> global_average_pool_backward(const FrameMask& mask, const Vector<Scalar>& upstream) {
  const Index valid = mask.count();
  if (valid == 0) throw DomainError("global_average_pool_backward: no valid frames");
  Matrix<Scalar> g = Matrix<Scalar>::Zero(mask.size(), upstream.size());
  const Vector<Scalar> share = upstream / static_cast<Scalar>(valid);
  for (Index t = 0; t < mask.size(); ++t) {
    if (mask(t)) g.row(t) = share.transpose();
  }
  return TemporalMap<Scalar>(std::move(g), mask);
}

/// Numerically stable softmax (max subtraction).
template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = logits.maxCoeff();
  Vector<Scalar> e = (logits.array() - peak).exp().matrix();
  return e / e.sum();
}

template <typename Scalar>
struct SoftmaxCrossEntropy {
  Scalar loss;
  Vector<Scalar> grad;  ///< dL/d(logits) = softmax - onehot
};

template <typename Scalar>
SoftmaxCrossEntropy<Scalar> softmax_cross_entropy(const Vector<Scalar>& logits, Index label) {
  if (logits.size() < 2) throw DomainError("softmax_cross_entropy: need at least 2 classes");
  if (label < 0 || label >= logits.size()) {
    throw DomainError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                      std::to_string(logits.size()) + ")");
  }
  const Scalar peak = logits.maxCoeff();
  const Vector<Scalar> shifted = (logits.array() - peak).matrix();
  const Scalar log_norm = std::log(shifted.array().exp().sum());
  SoftmaxCrossEntropy<Scalar> out;
  out.loss = log_norm - shifted(label);
  out.grad = (shifted.array() - log_norm).exp().matrix();
  out.grad(label) -= Scalar(1);
  return out;
}

using KeptMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct DropoutResult {
  TemporalMap<Scalar> output;
  KeptMask kept;
};

/// Inverted dropout: kept entries are scaled by 1 / (1 - rate) in training;
/// inference is the identity. The keep pattern depends only on `seed` and
/// the map shape.
template <typename Scalar>
DropoutResult<Scalar> dropout(const TemporalMap<Scalar>& input, double rate, std::uint64_t seed,
                              bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("dropout: rate must lie in [0, 1)");
  DropoutResult<Scalar> out{input, KeptMask::Constant(input.frames(), input.channels(), true)};
  if (!training || rate == 0.0) return out;

  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - rate);
  const Scalar scale = Scalar(1.0 / (1.0 - rate));
  for (Index c = 0; c < input.channels(); ++c) {
    for (Index t = 0; t < input.frames(); ++t) {
      const bool k = keep(rng);
      out.kept(t, c) = k;
      out.output.data(t, c) = k ? input.data(t, c) * scale : Scalar(0);
    }
  }
  return out;
}

template <typename Scalar>
TemporalMap<Scalar> dropout_backward(const TemporalMap<Scalar>& upstream, const KeptMask& kept, double rate) {
  if (kept.rows() != upstream.frames() || kept.cols() != upstream.channels()) {
    throw DimensionError("dropout_backward: keep mask shape mismatch");
  }
  const Scalar scale = Scalar(1.0 / (1.0 - rate));
  Matrix<Scalar> g = kept.select(upstream.data.array() * scale, Scalar(0)).matrix();
  return TemporalMap<Scalar>(std::move(g), upstream.mask);
}

}  // namespace restcn
