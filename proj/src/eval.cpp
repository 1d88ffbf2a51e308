#include "metricforge/eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "metricforge/numerics.hpp"

namespace metricforge {

std::map<int, double> recall_at_k(const EmbeddingBatch& embeddings,
                                  const std::vector<int>& ks, Metric metric) {
  embeddings.validate();
  const Eigen::Index n = embeddings.size();

  std::map<int, int> class_counts;
  for (Eigen::Index i = 0; i < n; ++i) ++class_counts[embeddings.labels[i]];
  for (const auto& [label, count] : class_counts)
    if (count < 2)
      throw SingletonClassError("recall_at_k: class " + std::to_string(label) +
                                " has a single sample");
  if (ks.empty()) throw EmptyInputError("recall_at_k: no k values");
  for (const int k : ks) {
    if (k < 1) throw KTooLargeError("recall_at_k: k must be >= 1");
    if (k >= n) throw KTooLargeError("recall_at_k: k must be < N");
  }

  // Higher score = closer. Negated squared distance keeps one ordering rule.
  Matrix score;
  if (metric == Metric::kCosine) {
    score = cosine_matrix(embeddings.data, embeddings.data);
  } else {
    score = -squared_distance_matrix(embeddings.data, embeddings.data);
  }

  std::map<int, int> hits;
  for (const int k : ks) hits[k] = 0;

  std::vector<int> order;
  for (Eigen::Index i = 0; i < n; ++i) {
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    order.erase(order.begin() + i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (score(i, a) != score(i, b)) return score(i, a) > score(i, b);
      return a < b;
    });
    // Rank of the first same-label neighbor; a hit at rank r counts for
    // every k >= r.
    int first_match = -1;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (embeddings.labels[order[r]] == embeddings.labels[i]) {
        first_match = static_cast<int>(r) + 1;
        break;
      }
    }
    for (const int k : ks)
      if (first_match != -1 && first_match <= k) ++hits[k];
  }

  std::map<int, double> recall;
  for (const int k : ks)
    recall[k] = static_cast<double>(hits[k]) / static_cast<double>(n);
  return recall;
}

std::pair<double, double> separation_stats(const EmbeddingBatch& embeddings) {
  embeddings.validate();
  const Eigen::Index n = embeddings.size();
  const Matrix s = cosine_matrix(embeddings.data, embeddings.data);

  double intra_sum = 0.0, inter_sum = 0.0;
  long intra_count = 0, inter_count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (embeddings.labels[i] == embeddings.labels[j]) {
        intra_sum += s(i, j);
        ++intra_count;
      } else {
        inter_sum += s(i, j);
        ++inter_count;
      }
    }
  }
  return {intra_count > 0 ? intra_sum / intra_count : 0.0,
          inter_count > 0 ? inter_sum / inter_count : 0.0};
}

RetrievalReport retrieval_report(const EmbeddingBatch& embeddings,
                                 const std::vector<int>& ks, Metric metric) {
  RetrievalReport report;
  report.recall_at_k = recall_at_k(embeddings, ks, metric);
  const auto [intra, inter] = separation_stats(embeddings);
  report.mean_intra_cos = intra;
  report.mean_inter_cos = inter;
  report.separation_gap = intra - inter;
  return report;
}

}  // namespace metricforge
