#pragma once

#include <vector>

#include "hatsc/rng.hpp"
#include "hatsc/tensor.hpp"

namespace hatsc {

// Differentiable primitives. Every op returns a fresh tensor; when autograd
// is enabled and an input requires grad, the op records a tape node with its
// backward rule. Shapes are checked up front and mismatches throw UsageError
// naming the offending shapes.

// Elementwise sum. Shapes must match, or b's shape must be a trailing suffix
// of a's (bias over leading batch dimensions); the suffix case reduces the
// gradient of b by summation over the broadcast dimensions.
template <class R>
TensorT<R> add(const TensorT<R>& a, const TensorT<R>& b);

// Elementwise product of same-shape tensors.
template <class R>
TensorT<R> mul(const TensorT<R>& a, const TensorT<R>& b);

template <class R>
TensorT<R> scale(const TensorT<R>& a, R factor);

// Batched matrix product a[..,m,k] x b[..,k,n] -> [..,m,n]. Leading batch
// dimensions must be identical, or one operand may be rank 2 and is then
// shared across the other's batch.
template <class R>
TensorT<R> matmul(const TensorT<R>& a, const TensorT<R>& b);

// Swap two axes (copying).
template <class R>
TensorT<R> transpose(const TensorT<R>& x, int axis0, int axis1);

template <class R>
TensorT<R> reshape(const TensorT<R>& x, Shape shape);

template <class R>
TensorT<R> concat(const std::vector<TensorT<R>>& parts, int axis);

template <class R>
TensorT<R> relu(const TensorT<R>& x);

// Softmax along one axis, stabilized by max subtraction. Rows of all-equal
// inputs (including fully masked rows) come out uniform.
template <class R>
TensorT<R> softmax(const TensorT<R>& x, int axis);

// Normalization over the last axis: zero mean, unit variance (eps inside the
// square root), then the per-feature affine gain/bias.
template <class R>
TensorT<R> layer_norm(const TensorT<R>& x, const TensorT<R>& gain, const TensorT<R>& bias, R eps);

// Inverted dropout: keep with probability 1-p and scale kept values by
// 1/(1-p). Identity when train is false or p == 0.
template <class R>
TensorT<R> dropout(const TensorT<R>& x, double p, bool train, Rng& rng);

// Writes `value` where mask is nonzero; gradients flow only through the kept
// positions. The mask participates as data, not as a differentiable input.
template <class R>
TensorT<R> masked_fill(const TensorT<R>& x, const TensorT<R>& mask, R value);

// Gathers rows of table [V, d] for each id; output is [ids.size(), d].
template <class R>
TensorT<R> embedding_lookup(const TensorT<R>& table, const std::vector<int>& ids);

template <class R>
TensorT<R> reduce_sum(const TensorT<R>& x);

// Mean over non-pad positions of the label-smoothed negative log-likelihood:
// (1-eps) * nll(target) + eps * mean over classes of nll. logits is [N, V],
// targets has N entries, positions equal to pad_id are excluded.
template <class R>
TensorT<R> cross_entropy(const TensorT<R>& logits, const std::vector<int>& targets,
                         double label_smoothing, int pad_id);

}  // namespace hatsc
