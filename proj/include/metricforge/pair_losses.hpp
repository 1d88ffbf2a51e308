#pragma once

#include "metricforge/types.hpp"

namespace metricforge {

// Pair filtering masks for the multi-similarity loss. positive_mask(i, j)
// selects same-class pairs (i != j), negative_mask(i, j) different-class
// pairs. Anchors lacking a positive or a negative are skipped and counted.
struct MsMiningMasks {
  BoolMatrix positive_mask;
  BoolMatrix negative_mask;
  double epsilon = 0.0;
  int anchors_without_positive = 0;
  int anchors_without_negative = 0;
};

// Squared-distance contrastive loss over one pair. Positive pairs (same
// class) pay |f_i - f_j|^2; negative pairs pay max(alpha - |f_i - f_j|^2, 0).
// Gradient rows: 0 -> f_i, 1 -> f_j. The hinge subgradient at the kink is 0.
LossOutput contrastive_loss(const Vector& f_i, const Vector& f_j,
                            bool same_class, double alpha);

// max(|f_a - f_p|^2 - |f_a - f_n|^2 + alpha, 0) with the closed-form active
// gradients 2(f_n - f_p), 2(f_p - f_a), 2(f_a - f_n). Gradient rows follow
// the argument order anchor/positive/negative.
LossOutput triplet_loss_euclidean(const Vector& f_a, const Vector& f_p,
                                  const Vector& f_n, double alpha);

// max(f_a.f_n - f_a.f_p + alpha, 0) over pre-normalized inputs; gradients
// carry no normalization Jacobian. Throws NotNormalizedError for rows far
// from unit norm.
LossOutput triplet_loss_cosine(const Vector& f_a, const Vector& f_p,
                               const Vector& f_n, double alpha);

// N-pair loss over a batch holding exactly two samples per class; within a
// class the first row (in batch order) is the anchor and the second the
// positive. Per anchor i the term is log(1 + sum_{j != i} exp(s_ij - s_ii))
// with s_ij = f_a^i . f_p^j, averaged over anchors. exponential_form=false
// switches to log(1 + sum (s_ij - s_ii)) for comparison; that variant throws
// NonFiniteLossError when the log argument is not positive.
LossOutput npair_loss(const EmbeddingBatch& batch, bool exponential_form = true);

// Multi-similarity pair filtering over a square cosine similarity matrix.
// Per anchor i, with hardest-positive similarity m_i = min_p S_ip and
// hardest-negative similarity M_i = max_n S_in:
//   negatives selected iff S_in > m_i - epsilon,
//   positives selected iff S_ip < M_i + epsilon.
MsMiningMasks ms_mine(const SimilarityMatrix& similarity,
                      const IntVector& labels, double epsilon);

// Multi-similarity loss over the mined pairs. Similarities are row dot
// products (rows are expected pre-normalized). Anchors with an empty mask on
// one side contribute only the other term; the mean runs over all B anchors.
LossOutput ms_loss(const EmbeddingBatch& batch, const MsMiningMasks& masks,
                   double alpha, double beta, double lambda);

}  // namespace metricforge
