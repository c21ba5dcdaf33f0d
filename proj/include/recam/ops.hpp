#pragma once

#include <cstdint>
#include <vector>

#include "recam/random.hpp"
#include "recam/tensor.hpp"

namespace recam {

// Differentiable kernels. Each returns a fresh tensor; when any input
// requires grad the output records parents and a backward function, and
// gradients flow to every recorded input on backward().

/// Standard matrix product [m x k] x [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// 2-D transpose.
Tensor transpose(const Tensor& a);

/// Elementwise sum of same-shape tensors.
Tensor add(const Tensor& a, const Tensor& b);

/// Adds a length-n row vector to every row of an [m x n] matrix.
Tensor add_rowvec(const Tensor& a, const Tensor& row);

/// Elementwise difference and product, same shape.
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

/// Multiply by a compile-time constant (not a recorded tensor).
Tensor scale(const Tensor& a, double c);

/// Gaussian-error linear unit, exact erf form.
Tensor gelu(const Tensor& a);

/// Numerically stable softmax along `axis` (max subtraction).
Tensor softmax(const Tensor& x, int axis);

/// Row softmax of an [m x n] matrix where invalid key columns get zero
/// weight. Throws degenerate_input_error when no column is valid.
Tensor softmax_rows_masked(const Tensor& x, const std::vector<std::uint8_t>& key_valid);

/// -log softmax(logits)[label] for a 1-D logits vector.
Tensor cross_entropy(const Tensor& logits, int label);

/// Mean of -log softmax(logits[i])[labels[i]] over the rows of a matrix.
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& labels);

/// Row i of an [m x n] matrix as a 1-D vector.
Tensor row(const Tensor& x, std::size_t i);

/// Inverted dropout: zero with probability `rate`, scale survivors by
/// 1/(1-rate) during training; identity in evaluation or at rate 0.
Tensor dropout(const Tensor& x, double rate, bool training, RandomSource& rng);

/// Mean over valid rows of an [L x d] matrix -> [d].
Tensor mean_pool(const Tensor& x, const std::vector<std::uint8_t>& valid);

/// Rows of an [L x d] matrix selected by index -> [k x d]; gradient
/// scatter-adds back.
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& indices);

/// Embedding rows for a sequence of ids -> [len(ids) x d].
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

/// Column-wise concatenation of matrices sharing a row count.
Tensor concat_cols(const std::vector<Tensor>& parts);

/// Concatenation of 1-D vectors.
Tensor concat_vec(const Tensor& a, const Tensor& b);

/// Stack n scalar tensors into a 1-D vector of length n.
Tensor stack_scalars(const std::vector<Tensor>& scalars);

/// Per-row layer normalization with learned gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Dot product of two 1-D vectors -> scalar.
Tensor dot(const Tensor& a, const Tensor& b);

/// Mean of scalar tensors -> scalar.
Tensor mean_scalars(const std::vector<Tensor>& scalars);

} // namespace recam
