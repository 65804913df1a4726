#pragma once

#include "rarunet/tensor.hpp"

namespace rarunet::ops {

// All NCHW operations take rank-4 tensors. Each records its backward rule on
// the tape when an operand requires a gradient.

/// 2-D cross-correlation with zero padding. weight is OC x IC x k x k, bias
/// is OC or empty.
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride = 1, int padding = 0);

/// Transposed convolution with a 2x2 kernel and stride 2. weight is
/// IC x OC x 2 x 2; the output is exactly twice the input extent.
template <typename T>
Tensor<T> conv_transpose2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, int stride = 2);

/// 2x2 max pooling. Ties resolve to the first element in row-major order.
template <typename T>
Tensor<T> maxpool2d(Tape<T>& tape, const Tensor<T>& input, int window = 2);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor);

/// Elementwise sum. b may equal a's shape or broadcast with C = 1 (spatial
/// map) or H = W = 1 (channel vector).
template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product with the same broadcast rules as add.
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// Channels [begin, end).
template <typename T>
Tensor<T> slice_channels(Tape<T>& tape, const Tensor<T>& x, int begin, int end);

enum class Axis { kChannel, kSpatial };
enum class Reduction { kMean, kMax };

/// Channel reduction yields N x 1 x H x W; spatial reduction yields N x C x 1 x 1.
template <typename T>
Tensor<T> reduce(Tape<T>& tape, const Tensor<T>& x, Axis axis, Reduction kind);

/// Sum of all elements as a one-element tensor.
template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& x);

/// Per-sample soft Dice loss 1 - (2 sum(p g) + eps) / (sum p + sum g + eps).
/// pred and target are N x C x H x W; the result has shape {N}.
template <typename T>
Tensor<T> dice_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target,
                    T smoothing = T(1));

}  // namespace rarunet::ops
