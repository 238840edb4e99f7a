#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lumamba/array.hpp"
#include "lumamba/tape.hpp"

// Differentiable primitives. Every op records its result on the tape of its
// first argument. Binary elementwise ops accept equal shapes, or a second
// shape that is a trailing suffix of the first (broadcast over leading axes);
// anything else is rejected with both shapes in the message.
namespace lumamba {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_scalar(Var x, Real c);
Var scale(Var x, Real c);
// c - x
Var div_scalar(Var x, Real c);
Var rsub_scalar(Real c, Var x);

Var sigmoid(Var x);
Var silu(Var x);
Var exp(Var x);
Var log(Var x);
Var softplus(Var x);
Var sqrt(Var x);
Var square(Var x);

// (M,K) x (K,N) -> (M,N)
Var matmul(Var a, Var b);
// (B,M,K) x (B,K,N) -> (B,M,N); with transpose_b, b is (B,N,K).
Var bmm(Var a, Var b, bool transpose_b = false);
// x (..., K) times w (K, N) plus optional bias (N).
Var linear(Var x, Var w);
Var linear(Var x, Var w, Var b);

// Cross-correlation with "same" zero padding, stride 1, channels-last.
// x (N, L, Cin), w (K, Cin, Cout), b (Cout) -> (N, L, Cout).
Var conv1d(Var x, Var w, Var b);

Var softmax(Var x);      // over last axis
Var log_softmax(Var x);  // over last axis
// Normalizes over the last axis; zero-variance rows map to zero before the affine.
Var layer_norm(Var x, Var gamma, Var beta, Real eps = Real(1e-5));

Var sum(Var x, std::size_t axis);
Var mean(Var x, std::size_t axis);
Var sum_all(Var x);
Var mean_all(Var x);

Var reshape(Var x, Shape shape);
Var permute(Var x, std::vector<std::size_t> perm);
Var transpose(Var x, std::size_t axis_a, std::size_t axis_b);
Var concat(std::span<const Var> xs, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var reverse(Var x, std::size_t axis);
// x's shape must be a trailing suffix of `shape`.
Var broadcast_to(Var x, Shape shape);

// Mean negative log-likelihood of integer labels under row-wise softmax.
Var cross_entropy(Var logits, std::span<const int> labels);

// Non-differentiable helpers on plain arrays.
Array permute_array(const Array& x, std::span<const std::size_t> perm);

}  // namespace lumamba
