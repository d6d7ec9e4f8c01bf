// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "newsrec/autodiff.hpp"

// Differentiable operations over tape variables. Every op records a node
// with its backward rule; none of them mutate their inputs.
//
// Ragged batches are represented as packed rows plus an `offsets` array of
// length S+1: segment s owns rows [offsets[s], offsets[s+1]).
namespace newsrec::ops {

using Offsets = std::span<const std::size_t>;

Var matmul(Var a, Var b);
Var matvec(Var a, Var v);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double c);
/// a[..., n] + bias[n] broadcast over rows.
Var add_bias(Var a, Var bias);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var gelu(Var a);

/// Softmax along the last axis, max-subtracted.
Var softmax(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

/// Row gather from a [V x d] table; throws IndexError on out-of-range ids.
Var embedding_lookup(Var table, std::span<const int> ids);
/// Row gather where index -1 yields a zero row.
Var gather_rows(Var x, std::span<const int> idx);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
/// Stacks equally sized rank-1 (or 1 x d) values into an n x d matrix.
Var stack_rows(std::span<const Var> rows);
/// Row i of a matrix as a rank-1 tensor.
Var row(Var x, std::size_t i);

Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);

/// Inverted dropout; identity unless the tape is in training mode and rate > 0.
Var dropout(Var x, double rate);

/// -log softmax(scores)[label] for a rank-1 score vector.
Var listwise_loss(Var scores, std::size_t label);
/// Mean over rows of -log softmax(logits[r])[targets[r]].
Var cross_entropy_rows(Var logits, std::span<const int> targets);

Var segment_softmax(Var x, Offsets offsets);
/// out[s] = sum_{i in s} w[i] * r[i]; w rank-1 over packed rows.
Var segment_weighted_sum(Var w, Var r, Offsets offsets);
/// Mean of each segment's rows. With skip_first the first row of a segment
/// is excluded unless it is the only row.
Var segment_mean(Var r, Offsets offsets, bool skip_first = false);
/// out[i] = a[i] . q[segment(i)].
Var segment_rowdot(Var a, Var q, Offsets offsets);

/// Scaled dot-product attention with `heads` heads, restricted to keys of
/// the same segment. If `probs` is non-null it receives, per segment, a
/// [heads x L x L] tensor of attention weights.
Var multihead_attention(Var q, Var k, Var v, Offsets offsets, std::size_t heads,
                        std::vector<Tensor>* probs = nullptr);

}  // namespace newsrec::ops
