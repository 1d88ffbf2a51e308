#pragma once

#include "metricforge/types.hpp"

namespace metricforge {

// Normalizes v to unit Euclidean norm. Throws ZeroVectorError when the norm
// is at or below kNormEpsilon.
Vector l2_normalize(const Vector& v);

// Row-wise l2_normalize.
Matrix l2_normalize_rows(const Matrix& m);

// Pairwise cosine similarities between the rows of a and b, entries clamped
// to [-1, 1]. Throws DimensionMismatchError / ZeroVectorError.
SimilarityMatrix cosine_similarity_matrix(const EmbeddingBatch& a,
                                          const EmbeddingBatch& b);

// Pairwise squared Euclidean distances between the rows of a and b.
SimilarityMatrix squared_euclidean_matrix(const EmbeddingBatch& a,
                                          const EmbeddingBatch& b);

// Softmax restricted to the unmasked entries; masked entries come back as
// exactly zero. Computed with max-subtraction. Throws AllMaskedError when no
// entry is unmasked.
Vector masked_softmax(const Vector& row, const BoolVector& mask);

// log(sum_i exp(v_i)) via max-shift; exact for singletons. Throws
// EmptyInputError.
double log_sum_exp(const Vector& values);

// --- internal building blocks shared by the losses ---

// Raw cosine matrix between rows (no clamping); throws on zero rows.
Matrix cosine_matrix(const Matrix& a, const Matrix& b);

// Raw pairwise squared distances between rows.
Matrix squared_distance_matrix(const Matrix& a, const Matrix& b);

// Forward state for differentiating through a cosine similarity block.
struct CosineSim {
  Matrix values;  // unclamped similarities
  Matrix a_hat, b_hat;
  Vector a_norm, b_norm;
};

CosineSim cosine_forward(const Matrix& a, const Matrix& b);

// Accumulates dL/da and dL/db given dL/dS. grad_a/grad_b must already have
// the right shape (rows of a / b); contributions are added in place, so the
// same accumulator may be passed twice when a and b are the same matrix.
void cosine_backward(const CosineSim& sim, const Matrix& grad_s,
                     Matrix& grad_a, Matrix& grad_b);

// Numerically stable log(1 + sum_i exp(x_i)) and the corresponding weights
// w_i = exp(x_i) / (1 + sum_j exp(x_j)). Empty input gives value 0.
double log1p_sum_exp(const Vector& x);
Vector log1p_sum_exp_weights(const Vector& x);

}  // namespace metricforge
