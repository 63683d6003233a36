#ifndef FTRL_OPS_HPP
#define FTRL_OPS_HPP

#include <span>

#include "ftrl/graph.hpp"

namespace ftrl {

// Differentiable primitives. All take node handles from one Graph and append
// a new node carrying the forward value plus a backward rule. Reductions are
// evaluated left-to-right in storage order and never in parallel, so repeated
// runs are bit-identical.
//
// Elementwise binary ops accept equal shapes, or a broadcast right-hand side:
// a one-element tensor against anything, or a rank-1 [n] against [m x n]
// (applied to every row).

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

/// c * a for a compile-time-known constant c.
Var scale(Var a, double c);
/// a + c elementwise.
Var add_scalar(Var a, double c);
inline Var neg(Var a) { return scale(a, -1.0); }

Var tanh(Var a);
Var exp(Var a);
Var log(Var a);

/// Full reductions to a rank-0 scalar.
Var sum(Var a);
Var mean(Var a);

/// Column means of an [m x n] matrix -> rank-1 [n]. The pooling readout.
Var mean_over_rows(Var a);

/// Normalized exponentials along `axis` (rank-1: axis 0; rank-2: axis 0 =
/// down each column, axis 1 = across each row).
Var softmax(Var a, int axis);

/// Zero-mean unit-variance normalization along `axis` using the population
/// variance; sigma = sqrt(var + eps), eps >= 0.
Var layer_norm(Var a, int axis, double eps);

Var transpose(Var a);

/// Stack parts vertically; rank-1 parts count as single rows.
Var concat_rows(std::span<const Var> parts);
/// Concatenate parts horizontally; rank-0/rank-1 parts yield a rank-1 result.
Var concat_cols(std::span<const Var> parts);

/// Elementwise log density of a diagonal Gaussian parameterized by log_std:
/// -0.5*ln(2*pi) - log_std - 0.5*((x - mean) * exp(-log_std))^2.
/// Differentiable in all three arguments.
Var gaussian_log_prob(Var x, Var mean, Var log_std);

/// Scalar forward of the same density, shared by the sampling path so that
/// log-probs recorded at collection time are bit-identical to the graph's.
double gaussian_log_density(double x, double mean, double log_std);

/// min(ratio*adv, clip(ratio, 1-eps, 1+eps)*adv) for a scalar ratio node.
/// The derivative in ratio is exactly zero when the clip saturates with the
/// advantage pushing outward.
Var clipped_surrogate(Var ratio, double advantage, double eps);

}  // namespace ftrl

#endif  // FTRL_OPS_HPP
