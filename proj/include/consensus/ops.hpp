#pragma once

// Differentiable ops. Each computes its output eagerly and records a
// backward rule on the inputs' tape.

#include <cstddef>
#include <vector>

#include "consensus/tape.hpp"

namespace consensus::ops {

// Elementwise, identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Elementwise a / d. Keeps k / k == 1 exact where scale(a, 1 / k) would not.
Var divide(Var a, double d);

Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);

/// Adds bias[k] to every element of x whose leading index is k.
Var add_channel_bias(Var x, Var bias);

/// a has shape [..., trailing], b has shape trailing; b repeats over the
/// leading axes of a.
Var mul_trailing(Var a, Var b);

Var reshape(Var x, Shape shape);
Var transpose(Var x);  // rank 2

Var concat(const std::vector<Var>& parts, std::size_t axis);
Var narrow(Var x, std::size_t axis, std::size_t start, std::size_t length);
/// Drops `axis`, keeping the slice at `index`.
Var select(Var x, std::size_t axis, std::size_t index);
/// Inverse of select: inserts a new axis of length parts.size().
Var stack(const std::vector<Var>& parts, std::size_t axis);

Var sum(Var x);   // -> scalar
Var mean(Var x);  // -> scalar
Var sum_last_axis(Var x);

Var matmul(Var a, Var b);  // M x K by K x N

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t dilation = 1;
};

/// x: Cin x H x W, weight: Cout x Cin x k x k (k odd), bias: Cout or an
/// invalid Var for none. Zero padding of (k-1)*dilation/2.
Var conv2d(Var x, Var weight, Var bias, Conv2dOptions options = {});

/// x: C x H x W -> C x (H*W) x r^2 sliding r x r blocks, zero padded.
Var unfold(Var x, std::size_t r);

/// C x H x W -> C x (H*f) x (W*f) by pixel replication.
Var upsample_nearest(Var x, std::size_t factor);
/// Bilinear resize by an integer factor (half-pixel centres, edge clamped).
Var upsample_bilinear(Var x, std::size_t factor);

/// Row-wise softmax of a rank-2 tensor.
Var softmax_rows(Var x);

}  // namespace consensus::ops
