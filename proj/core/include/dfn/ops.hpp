#pragma once

#include "dfn/autograd.hpp"
#include "dfn/tensor.hpp"

namespace dfn {

// Differentiable ops over NCHW tensors. Rank-3 inputs [C,H,W] are treated as
// a single sample; rank-4 [N,C,H,W] as a batch. Outputs keep the input rank.
// Every op validates shapes up front and throws ShapeError on mismatch.
//
// Reductions and normalization statistics accumulate in double regardless of
// the tensor scalar type, so results do not depend on traversal order.

enum class PoolKind { Max, Avg };
enum class ReduceKind { Avg, Max };
enum class ActKind { Relu, Sigmoid };

// Cross-correlation with square kernel, symmetric zero padding.
// x [*,Cin,H,W], w [Cout,Cin,k,k], optional bias [Cout] (pass nullptr for
// none). Output spatial side = floor((H + 2*padding - k)/stride) + 1.
template <typename S>
TensorPtrT<S> conv2d(const TensorPtrT<S>& x, const TensorPtrT<S>& w,
                     const TensorPtrT<S>& bias, int stride, int padding);

// Batch normalization over (N,H,W) per channel. In training mode uses batch
// statistics (biased variance) and updates running stats in place with
// momentum; in eval mode uses the running stats and touches nothing.
template <typename S>
TensorPtrT<S> batch_norm(const TensorPtrT<S>& x, const TensorPtrT<S>& gamma,
                         const TensorPtrT<S>& beta,
                         const TensorPtrT<S>& running_mean,
                         const TensorPtrT<S>& running_var, bool training,
                         double momentum = 0.1, double eps = 1e-5);

template <typename S>
TensorPtrT<S> activation(const TensorPtrT<S>& x, ActKind kind);
template <typename S>
TensorPtrT<S> relu(const TensorPtrT<S>& x) {
  return activation(x, ActKind::Relu);
}
template <typename S>
TensorPtrT<S> sigmoid(const TensorPtrT<S>& x) {
  return activation(x, ActKind::Sigmoid);
}

// window x window pooling, no padding; input side must satisfy
// (side - window) % stride == 0 so the grid tiles exactly.
template <typename S>
TensorPtrT<S> pool2d(const TensorPtrT<S>& x, PoolKind kind, int window,
                     int stride);

// Global spatial reduction: [*,C,H,W] -> [*,C] (rank 3 -> [C]).
template <typename S>
TensorPtrT<S> reduce_spatial(const TensorPtrT<S>& x, ReduceKind kind);

// Cross-channel reduction: [*,C,H,W] -> [*,1,H,W] (rank 3 -> [1,H,W]).
template <typename S>
TensorPtrT<S> reduce_channels(const TensorPtrT<S>& x, ReduceKind kind);

// x [N,D] or [D], w [M,D] row-major, optional bias [M].
template <typename S>
TensorPtrT<S> fully_connected(const TensorPtrT<S>& x, const TensorPtrT<S>& w,
                              const TensorPtrT<S>& bias);

// Concatenation along `axis`; all other dims must match exactly.
template <typename S>
TensorPtrT<S> concat(const std::vector<TensorPtrT<S>>& xs, int axis);

// Stable softmax + negative log likelihood for one sample. logits [C],
// label in [0, C).
template <typename S>
TensorPtrT<S> softmax_cross_entropy(const TensorPtrT<S>& logits, int label);

// Softmax probabilities (forward only, not differentiable).
template <typename S>
std::vector<double> softmax(const TensorPtrT<S>& logits);

// Elementwise sum, identical shapes.
template <typename S>
TensorPtrT<S> add(const TensorPtrT<S>& a, const TensorPtrT<S>& b);

// Multiply by a compile-time-known constant.
template <typename S>
TensorPtrT<S> scale(const TensorPtrT<S>& x, double factor);

// Scale slices along leading dims by a weight tensor:
//   w rank 1 [K]:  x [K,...]   row i scaled by w[i]
//   w rank 2 [N,C]: x [N,C,...] slice (n,c) scaled by w[n][c]
template <typename S>
TensorPtrT<S> mul_channels(const TensorPtrT<S>& x, const TensorPtrT<S>& w);

// Broadcast a one-channel map over all channels:
// x [N,C,H,W] * m [N,1,H,W], or x [C,H,W] * m [1,H,W].
template <typename S>
TensorPtrT<S> mul_spatial(const TensorPtrT<S>& x, const TensorPtrT<S>& m);

// [N,D] -> [D], summing over rows.
template <typename S>
TensorPtrT<S> sum_rows(const TensorPtrT<S>& x);

// [N,C] -> [N], mean over columns.
template <typename S>
TensorPtrT<S> mean_cols(const TensorPtrT<S>& x);

// Any shape -> [1].
template <typename S>
TensorPtrT<S> sum_all(const TensorPtrT<S>& x);

// x / s where s is a [1] tensor (differentiable in both).
template <typename S>
TensorPtrT<S> div_by_scalar(const TensorPtrT<S>& x, const TensorPtrT<S>& s);

// Same data, new shape (numel must match). Copies.
template <typename S>
TensorPtrT<S> reshape(const TensorPtrT<S>& x, Shape shape);

}  // namespace dfn
