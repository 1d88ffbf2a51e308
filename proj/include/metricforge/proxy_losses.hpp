#pragma once

#include <vector>

#include "metricforge/types.hpp"

namespace metricforge {

// Trainable class-representative vectors. Proxies are stored class-major:
// proxy c*M + m belongs to class c, so every class owns exactly M rows.
struct ProxySet {
  Matrix vectors;         // (M*C) x d
  IntVector proxy_class;  // length M*C
  int proxies_per_class = 1;
  bool normalized = true;

  Eigen::Index size() const { return vectors.rows(); }
  Eigen::Index dim() const { return vectors.cols(); }
  int num_classes() const {
    return static_cast<int>(vectors.rows()) / proxies_per_class;
  }
  void validate() const;
};

// Seeded standard-normal rows, L2-normalized.
ProxySet make_random_proxies(int num_classes, int proxies_per_class, int dim,
                             std::uint64_t seed);

struct ProxyGmlConfig {
  int K = 1;            // proxies kept per sample
  double lambda = 0.3;  // weight of the proxy-to-proxy regularizer
  int M = 1;            // proxies per class
};

// Reference NCA loss over raw squared distances:
//   -(1/V) sum_i log( sum_{j in class(i), j != i} e^{-D_ij}
//                     / sum_{k != i} e^{-D_ik} )
// Anchors whose class has no other sample are skipped; V counts the anchors
// that remain. Throws NoPositiveError when no anchor has a positive.
LossOutput nca_loss(const EmbeddingBatch& batch);

// NCA against class proxies (one per class). The denominator runs over the
// proxies of the *other* classes only, so the value can be negative.
LossOutput proxynca_loss(const EmbeddingBatch& batch, const ProxySet& proxies);

// Proper softmax over distances to all proxies with temperature scaling:
//   (1/B) sum_i -log softmax_k(-D(f_i, P_k)/T)[y_i]  >=  0.
LossOutput proxynca_pp_loss(const EmbeddingBatch& batch,
                            const ProxySet& proxies, double temperature);

// Proxy-anchor loss over cosine similarities. P+ holds the proxies of the
// classes present in the batch; every sample of a proxy's class is a
// positive for it and every other sample a negative.
LossOutput proxy_anchor_loss(const EmbeddingBatch& batch,
                             const ProxySet& proxies, double alpha,
                             double delta);

// The loss restricted to a fixed sample-by-proxy similarity matrix, plus its
// gradient there. Used to cross-check the closed-form dL/dS.
double proxy_anchor_value_from_similarity(const Matrix& s,
                                          const IntVector& labels,
                                          const IntVector& proxy_class,
                                          double alpha, double delta);
Matrix proxy_anchor_grad_wrt_similarity(const Matrix& s,
                                        const IntVector& labels,
                                        const IntVector& proxy_class,
                                        double alpha, double delta);

// Per-sample selection of K proxies from a (M*C) x B proxy-by-sample
// similarity matrix: all M proxies of the sample's class are always kept and
// the remaining K-M slots go to the most similar other proxies (ties broken
// by lowest proxy index). Each result is sorted ascending.
std::vector<std::vector<int>> proxygml_select(const SimilarityMatrix& s_p,
                                              const IntVector& labels,
                                              const ProxyGmlConfig& cfg);

// Full pipeline: proxy-sample cosine similarities -> top-K selection ->
// per-class aggregation -> masked softmax -> cross entropy, plus the
// lambda-weighted proxy-to-proxy regularizer. The selection is treated as a
// constant of the batch when differentiating.
LossOutput proxygml_loss(const EmbeddingBatch& batch, const ProxySet& proxies,
                         const ProxyGmlConfig& cfg);

// Same loss with an externally fixed selection (used to freeze the discrete
// step under finite differences).
LossOutput proxygml_loss_with_selection(
    const EmbeddingBatch& batch, const ProxySet& proxies,
    const ProxyGmlConfig& cfg, const std::vector<std::vector<int>>& selection);

}  // namespace metricforge
