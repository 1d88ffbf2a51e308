#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "metricforge/errors.hpp"

namespace metricforge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using BoolVector = Eigen::Array<bool, Eigen::Dynamic, 1>;

inline constexpr double kNormEpsilon = 1e-12;

// A mini-batch of embeddings: one row per sample plus 0-based class labels.
struct EmbeddingBatch {
  Matrix data;       // B x d
  IntVector labels;  // length B
  bool normalized = false;

  Eigen::Index size() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }

  // Checks the structural invariants; throws on violation.
  void validate() const {
    if (data.rows() < 1 || data.cols() < 1)
      throw DimensionMismatchError("EmbeddingBatch: need B >= 1 and d >= 1");
    if (labels.size() != data.rows())
      throw DimensionMismatchError("EmbeddingBatch: labels length != rows");
    for (Eigen::Index i = 0; i < labels.size(); ++i)
      if (labels[i] < 0)
        throw BadBatchStructureError("EmbeddingBatch: negative label");
    if (normalized) {
      for (Eigen::Index i = 0; i < data.rows(); ++i)
        if (std::abs(data.row(i).norm() - 1.0) > 1e-9)
          throw NotNormalizedError("EmbeddingBatch: row " + std::to_string(i) +
                                   " is not unit norm");
    }
  }
};

enum class Metric { kCosine, kSquaredEuclidean };
enum class IndexKind { kSample, kProxy };

// Pairwise similarities or squared distances with a metric tag. row_kind and
// col_kind say what each axis indexes (samples or proxies).
struct SimilarityMatrix {
  Matrix values;
  Metric metric = Metric::kCosine;
  IndexKind row_kind = IndexKind::kSample;
  IndexKind col_kind = IndexKind::kSample;
};

// Scalar loss value plus gradients. grad_embeddings matches the embedding
// input of the loss (for the small vector losses the rows follow the argument
// order, e.g. anchor/positive/negative). grad_proxies is present only for
// proxy-based losses.
struct LossOutput {
  double value = 0.0;
  Matrix grad_embeddings;
  std::optional<Matrix> grad_proxies;

  bool all_finite() const {
    if (!std::isfinite(value) || !grad_embeddings.allFinite()) return false;
    return !grad_proxies || grad_proxies->allFinite();
  }
};

}  // namespace metricforge
