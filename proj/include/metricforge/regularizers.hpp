#pragma once

#include <map>
#include <string>
#include <vector>

#include "metricforge/pair_losses.hpp"
#include "metricforge/proxy_losses.hpp"
#include "metricforge/types.hpp"

namespace metricforge {

// Frozen per-class text-side embedding vectors. The vectors are inputs and
// are never trained; their dimension may differ from the embedding space.
struct LabelEmbeddingTable {
  std::map<int, Vector> vectors;
  std::string source;  // file path or "synthetic"
  std::string prompt_template = "A photo of <label>";

  const Vector& at(int label) const {
    auto it = vectors.find(label);
    if (it == vectors.end())
      throw MissingProxyError("LabelEmbeddingTable: no entry for class " +
                              std::to_string(label));
    return it->second;
  }
};

// Seeded random unit vectors per class, generated in ascending class order.
LabelEmbeddingTable synthetic_label_table(const std::vector<int>& class_ids,
                                          int dim, std::uint64_t seed);

// Teacher similarity matrix for a batch: S(i, j) = cosine of the label
// vectors of samples i and j (duplicated labels share vectors).
SimilarityMatrix label_similarity_matrix(const LabelEmbeddingTable& table,
                                         const IntVector& labels);

// Mean row-wise KL divergence between the row softmax of s_img and the row
// softmax of s_lang + gamma_l. The gradient (grad_embeddings field) is taken
// with respect to the entries of s_img; the teacher side is constant. Note
// the row-wise softmax absorbs the constant gamma_l shift.
LossOutput language_distill_loss(const SimilarityMatrix& s_img,
                                 const SimilarityMatrix& s_lang,
                                 double gamma_l);

// value and gradients of dml + omega * lang. Throws ShapeMismatchError when
// the gradient blocks disagree.
LossOutput combine_with_language(const LossOutput& dml, const LossOutput& lang,
                                 double omega);

// Distillation loss evaluated on a batch: the student matrix is the cosine
// similarity of the batch rows and gradients are chained to the embeddings.
LossOutput language_distill_on_batch(const EmbeddingBatch& batch,
                                     const LabelEmbeddingTable& table,
                                     double gamma_l);

// Cosine between the displacement vectors f_n - f_a and f_p - f_a, with
// gradients for all three points. Throws DegenerateDirectionError when a
// displacement norm is at or below 1e-9.
struct DirectionCos {
  double value = 0.0;
  Vector grad_anchor, grad_positive, grad_negative;
};
DirectionCos direction_cos(const Vector& f_a, const Vector& f_p,
                           const Vector& f_n);

// How the gamma-weighted direction cosine enters a directed loss. kPenalty
// adds it, so gradient descent drives the negative's escape direction toward
// orthogonality with the anchor-positive displacement. kDiscount subtracts
// it (the margin shrinks for aligned negatives); kept for comparison.
enum class DirectionTerm { kPenalty, kDiscount };

struct DirectedOptions {
  DirectionTerm term = DirectionTerm::kPenalty;
  bool hinge = true;  // triplet only: hinge the full expression
};

// Triplet loss plus the gamma-weighted direction cosine inside the hinge.
// gamma = 0 reproduces triplet_loss_euclidean exactly.
LossOutput directed_triplet_loss(const Vector& f_a, const Vector& f_p,
                                 const Vector& f_n, double alpha, double gamma,
                                 const DirectedOptions& opts = {});

// Multi-similarity loss whose negative exponents carry the direction cosine
// against the anchor's hardest (lowest-similarity) mined positive. Anchors
// without a mined positive fall back to the plain negative term.
LossOutput directed_ms_loss(const EmbeddingBatch& batch,
                            const MsMiningMasks& masks, double alpha,
                            double beta, double lambda, double gamma,
                            const DirectedOptions& opts = {});

// Same with the hardest mined positive fixed externally (-1 for anchors
// without one); used to freeze the selection under finite differences.
LossOutput directed_ms_loss_with_hardest(const EmbeddingBatch& batch,
                                         const MsMiningMasks& masks,
                                         const std::vector<int>& hardest_pos,
                                         double alpha, double beta,
                                         double lambda, double gamma,
                                         const DirectedOptions& opts = {});

// Hardest mined positive per anchor under row dot-product similarity.
std::vector<int> hardest_mined_positive(const EmbeddingBatch& batch,
                                        const MsMiningMasks& masks);

// ProxyNCA whose negative-proxy exponents carry the direction cosine between
// the sample-to-negative-proxy and sample-to-own-proxy displacements.
LossOutput directed_proxynca_loss(const EmbeddingBatch& batch,
                                  const ProxySet& proxies, double gamma,
                                  const DirectedOptions& opts = {});

}  // namespace metricforge
