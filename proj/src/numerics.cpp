#include "metricforge/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace metricforge {

Vector l2_normalize(const Vector& v) {
  const double n = v.norm();
  if (n <= kNormEpsilon)
    throw ZeroVectorError("l2_normalize: vector norm below 1e-12");
  return v / n;
}

Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n <= kNormEpsilon)
      throw ZeroVectorError("l2_normalize_rows: row " + std::to_string(i) +
                            " has norm below 1e-12");
    out.row(i) = m.row(i) / n;
  }
  return out;
}

Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw DimensionMismatchError("cosine_matrix: dimension mismatch");
  return l2_normalize_rows(a) * l2_normalize_rows(b).transpose();
}

Matrix squared_distance_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw DimensionMismatchError("squared_distance_matrix: dimension mismatch");
  Matrix out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      out(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return out;
}

SimilarityMatrix cosine_similarity_matrix(const EmbeddingBatch& a,
                                          const EmbeddingBatch& b) {
  Matrix s = cosine_matrix(a.data, b.data);
  // Rounding can push dot products of unit rows slightly outside [-1, 1].
  s = s.cwiseMax(-1.0).cwiseMin(1.0);
  return SimilarityMatrix{std::move(s), Metric::kCosine, IndexKind::kSample,
                          IndexKind::kSample};
}

SimilarityMatrix squared_euclidean_matrix(const EmbeddingBatch& a,
                                          const EmbeddingBatch& b) {
  return SimilarityMatrix{squared_distance_matrix(a.data, b.data),
                          Metric::kSquaredEuclidean, IndexKind::kSample,
                          IndexKind::kSample};
}

Vector masked_softmax(const Vector& row, const BoolVector& mask) {
  if (row.size() != mask.size())
    throw DimensionMismatchError("masked_softmax: length mismatch");
  double max_val = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < row.size(); ++i)
    if (mask[i]) max_val = std::max(max_val, row[i]);
  if (!std::isfinite(max_val))
    throw AllMaskedError("masked_softmax: no unmasked entry");

  Vector out = Vector::Zero(row.size());
  double denom = 0.0;
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    if (!mask[i]) continue;
    out[i] = std::exp(row[i] - max_val);
    denom += out[i];
  }
  for (Eigen::Index i = 0; i < row.size(); ++i)
    if (mask[i]) out[i] /= denom;
  return out;
}

double log_sum_exp(const Vector& values) {
  if (values.size() == 0) throw EmptyInputError("log_sum_exp: empty input");
  const double m = values.maxCoeff();
  if (values.size() == 1) return m;
  double s = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) s += std::exp(values[i] - m);
  return m + std::log(s);
}

double log1p_sum_exp(const Vector& x) {
  if (x.size() == 0) return 0.0;
  const double m = std::max(0.0, x.maxCoeff());
  double s = std::exp(-m);  // the implicit 1 term
  for (Eigen::Index i = 0; i < x.size(); ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

Vector log1p_sum_exp_weights(const Vector& x) {
  const double lse = log1p_sum_exp(x);
  Vector w(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) w[i] = std::exp(x[i] - lse);
  return w;
}

CosineSim cosine_forward(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw DimensionMismatchError("cosine_forward: dimension mismatch");
  CosineSim sim;
  sim.a_norm = a.rowwise().norm();
  sim.b_norm = b.rowwise().norm();
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    if (sim.a_norm[i] <= kNormEpsilon)
      throw ZeroVectorError("cosine_forward: zero row in a");
  for (Eigen::Index j = 0; j < b.rows(); ++j)
    if (sim.b_norm[j] <= kNormEpsilon)
      throw ZeroVectorError("cosine_forward: zero row in b");
  sim.a_hat = sim.a_norm.cwiseInverse().asDiagonal() * a;
  sim.b_hat = sim.b_norm.cwiseInverse().asDiagonal() * b;
  sim.values = sim.a_hat * sim.b_hat.transpose();
  return sim;
}

void cosine_backward(const CosineSim& sim, const Matrix& grad_s,
                     Matrix& grad_a, Matrix& grad_b) {
  // dS_ij/da_i = (b_hat_j - S_ij a_hat_i) / |a_i|,
  // dS_ij/db_j = (a_hat_i - S_ij b_hat_j) / |b_j|.
  const Vector row_dot = (grad_s.array() * sim.values.array()).rowwise().sum();
  const Vector col_dot = (grad_s.array() * sim.values.array()).colwise().sum();
  grad_a += sim.a_norm.cwiseInverse().asDiagonal() *
            (grad_s * sim.b_hat - row_dot.asDiagonal() * sim.a_hat);
  grad_b += sim.b_norm.cwiseInverse().asDiagonal() *
            (grad_s.transpose() * sim.a_hat - col_dot.asDiagonal() * sim.b_hat);
}

}  // namespace metricforge
