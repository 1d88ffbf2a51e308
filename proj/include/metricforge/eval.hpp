#pragma once

#include <map>
#include <vector>

#include "metricforge/types.hpp"

namespace metricforge {

struct RetrievalReport {
  std::map<int, double> recall_at_k;
  double mean_intra_cos = 0.0;
  double mean_inter_cos = 0.0;
  double separation_gap = 0.0;  // intra - inter
};

// recall@k by brute-force scan: for every sample its k nearest neighbors
// (self excluded, ties broken by lower index) are checked for a shared
// label. Requires every class to have >= 2 samples and max(ks) < N.
std::map<int, double> recall_at_k(const EmbeddingBatch& embeddings,
                                  const std::vector<int>& ks,
                                  Metric metric = Metric::kCosine);

// Mean cosine similarity over same-label pairs (i < j) and different-label
// pairs. A missing pair population yields 0 for that mean.
std::pair<double, double> separation_stats(const EmbeddingBatch& embeddings);

RetrievalReport retrieval_report(const EmbeddingBatch& embeddings,
                                 const std::vector<int>& ks,
                                 Metric metric = Metric::kCosine);

}  // namespace metricforge
