#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mscl/tensor.hpp"

// Differentiable operations. Each records a backward closure on the active
// tape when any input requires grad. "Row" ops treat a rank-1 tensor as a
// single row.
namespace mscl {

// [r x k] * [k x c]
Tensor matmul(const Tensor &a, const Tensor &b);
// [r x k] * [c x k]^T
Tensor matmul_nt(const Tensor &a, const Tensor &b);
Tensor transpose(const Tensor &a);

Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &a, double factor);
// x[r x c] + bias[c] broadcast over rows.
Tensor add_row(const Tensor &x, const Tensor &bias);

// Subgradient at 0 is 0.
Tensor relu(const Tensor &x);

// Row-max stabilized. NaN inputs throw InvalidValueError.
Tensor softmax_rows(const Tensor &x);
// Row i only attends to columns j <= i + offset; masked entries are exactly 0.
Tensor causal_softmax_rows(const Tensor &x, std::size_t offset = 0);

Tensor layer_norm(const Tensor &x, const Tensor &gain, const Tensor &bias, double eps = 1e-5);

// Elementwise max over m equal-length vectors. Ties route the gradient to
// the lowest sequence index.
Tensor max_pool_rows(std::span<const Tensor> xs);

// -(1/r) sum_ij y_ij log(clamp(p_ij, 1e-12, 1)); y must be one-hot per row.
Tensor cross_entropy_rows(const Tensor &p, const Tensor &y);

// Norms are clamped at 1e-12.
Tensor cosine_sim(const Tensor &a, const Tensor &b);
// out[i][j] = cos(a_i, b_j) for row sets a[N x p], b[M x p].
Tensor cosine_sim_matrix(const Tensor &a, const Tensor &b);

// out[i] = log sum_j w_ij exp(s_ij). Weights are constants, nonnegative, and
// each row needs at least one positive weight.
Tensor weighted_logsumexp_rows(const Tensor &s, const Tensor &weights);
Tensor diagonal(const Tensor &s);

Tensor sum(const Tensor &x);
// Mean over rows of [r x c] -> [c].
Tensor mean_rows(const Tensor &x);

Tensor reshape(const Tensor &x, Shape shape);
Tensor slice_cols(const Tensor &x, std::size_t start, std::size_t len);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor &x, std::size_t start, std::size_t len);
Tensor concat_rows(std::span<const Tensor> parts);
// Rows of table[V x d] picked by ids -> [ids.size() x d].
Tensor gather_rows(const Tensor &table, std::span<const std::size_t> ids);
// m rank-1 tensors of length c -> [m x c].
Tensor stack_rows(std::span<const Tensor> rows);
Tensor select_row(const Tensor &x, std::size_t row);

}  // namespace mscl
