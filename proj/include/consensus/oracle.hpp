#pragma once

// Brute-force references. Everything here is written loop by loop from the
// defining formulas and links only against the Tensor container, never the
// kernels or ops it is used to check.

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "consensus/tensor.hpp"

namespace consensus::oracle {

/// Zero-padded cross-correlation, pad (k-1)*dilation/2. bias may be empty.
Tensor naive_conv(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride = 1,
                  std::size_t dilation = 1);

/// C x H x W -> C x (H*W) x r^2.
Tensor naive_unfold(const Tensor& x, std::size_t r);

Tensor naive_matmul(const Tensor& a, const Tensor& b);

/// Q[c,i,j] = 1/r^2 sum_{dh,dw} theta[dh*r + dw + (r^2-1)/2, i, j] * P[c, i+dh, j+dw].
Tensor naive_ict(const Tensor& p, const Tensor& theta, std::size_t r);

/// F[c,i,j] = 1/(H W) sum_{h,w} phi[i*W+j, h*W+w] * E[c,h,w].
Tensor naive_cct(const Tensor& e, const Tensor& phi);

struct LstmStepResult {
  Tensor h;
  Tensor c;
};

/// Scalar recurrence for one step over L lanes. weight 4d x (C+d), bias 4d,
/// h and c d x L, x C x L.
LstmStepResult naive_lstm_step(const Tensor& weight, const Tensor& bias, const Tensor& h, const Tensor& c,
                               const Tensor& x, bool previous_cell_output = false);

/// Sequential per-lane sweep; time_axis 1 = rows (vertical), 2 = columns.
Tensor naive_bilstm(const Tensor& w_fwd, const Tensor& b_fwd, const Tensor& w_bwd, const Tensor& b_bwd,
                    const Tensor& x, std::size_t time_axis, bool previous_cell_output = false);

/// Mean softmax cross-entropy over pixels whose label is not 255.
double naive_softmax_xent(const Tensor& logits, std::span<const int> labels);

/// Pairwise-loop non-local aggregation: out[:, p] = sum_q softmax_q(q_p . k_q) v[:, q].
Tensor naive_nonlocal_aggregate(const Tensor& query, const Tensor& key, const Tensor& value);

/// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h for every coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double step = 1e-5);

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double step = 1e-5;
  double threshold = 1e-5;
  bool passed = false;

  std::string to_json() const;
};

/// Relative error max_k |a_k - n_k| / max(max|a|, max|n|, 1e-8): the
/// elementwise |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
/// with magnitudes taken as the tensor's largest entry.
GradCheckReport compare_gradients(std::string name, const Tensor& analytic, const Tensor& numeric,
                                  double step = 1e-5, double threshold = 1e-5);

}  // namespace consensus::oracle
