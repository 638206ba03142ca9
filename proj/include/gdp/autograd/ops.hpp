#pragma once

#include <vector>

#include "gdp/autograd/tensor.hpp"

namespace gdp::ag {

// Elementwise; shapes must match exactly.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
// x * s where s holds a single element.
Var scale_by(const Var& x, const Var& s);
// Adds b (length = last dim of x) to every row.
Var add_bias(const Var& x, const Var& b);

// [n,k] x [k,m] -> [n,m]
Var matmul(const Var& a, const Var& b);

Var relu(const Var& x);
Var tanh(const Var& x);
Var exp(const Var& x);

// Sum of every element, shape [1].
Var sum(const Var& x);
// Per-row L1 (p=1) or L2 (p=2) norm of a rank-2 tensor, shape [n]. The
// subgradient at zero is taken as zero.
Var row_norms(const Var& x, int p);

Var reshape(const Var& x, Shape shape);
Var slice_cols(const Var& x, int begin, int end);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var gather_rows(const Var& x, std::vector<int> rows);

// NHWC convolution. w is [kh, kw, c_in, c_out], b is [c_out].
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// [N,H,W,C] -> [N,C] mean over the spatial cells.
Var spatial_mean(const Var& x);

// Compressed neighbor lists: row i owns indices[offsets[i] .. offsets[i+1]).
struct Csr {
  std::vector<int> offsets{0};
  std::vector<int> indices;

  static Csr from_lists(const std::vector<std::vector<int>>& lists);
  int rows() const { return static_cast<int>(offsets.size()) - 1; }
  int degree(int row) const { return offsets[row + 1] - offsets[row]; }
};

// Softmax over each row's neighbors of logit_scale * <z_i, z_j>, restricted
// to the feature slice [head*width, (head+1)*width). Writes one weight per
// stored edge into weights (resized to adj.indices.size()).
void neighborhood_softmax(const Tensor& z, const Csr& adj, int heads, int head, double logit_scale,
                          std::vector<double>& weights);

// Multi-head dot-product attention aggregation. For each node i and head k:
//   out[i, k-slice] = sum_j softmax_j(scale <z_i,k, z_j,k>) z_j,k
// over the neighbors j of i. z is [n, C] with C divisible by heads.
Var graph_attention(const Var& z, const Csr& adj, int heads, double logit_scale);

}  // namespace gdp::ag
