#include "metricforge/pair_losses.hpp"

#include <cmath>
#include <map>
#include <vector>

#include "metricforge/numerics.hpp"

namespace metricforge {

namespace {

void require_same_dim(const Vector& a, const Vector& b, const char* who) {
  if (a.size() != b.size())
    throw DimensionMismatchError(std::string(who) + ": dimension mismatch");
}

void require_unit(const Vector& v, const char* who) {
  // Loose guard: callers are expected to pass unit vectors; the tolerance
  // leaves room for finite-difference probes of the surrounding loss.
  if (std::abs(v.norm() - 1.0) > 1e-4)
    throw NotNormalizedError(std::string(who) + ": input is not unit norm");
}

}  // namespace

LossOutput contrastive_loss(const Vector& f_i, const Vector& f_j,
                            bool same_class, double alpha) {
  require_same_dim(f_i, f_j, "contrastive_loss");
  if (alpha < 0.0) throw Error("contrastive_loss: alpha must be >= 0");

  const Vector diff = f_i - f_j;
  const double dist2 = diff.squaredNorm();
  LossOutput out;
  out.grad_embeddings = Matrix::Zero(2, f_i.size());
  if (same_class) {
    out.value = dist2;
    out.grad_embeddings.row(0) = 2.0 * diff;
    out.grad_embeddings.row(1) = -2.0 * diff;
  } else {
    const double hinge = alpha - dist2;
    if (hinge > 0.0) {
      out.value = hinge;
      out.grad_embeddings.row(0) = -2.0 * diff;
      out.grad_embeddings.row(1) = 2.0 * diff;
    }
  }
  return out;
}

LossOutput triplet_loss_euclidean(const Vector& f_a, const Vector& f_p,
                                  const Vector& f_n, double alpha) {
  require_same_dim(f_a, f_p, "triplet_loss_euclidean");
  require_same_dim(f_a, f_n, "triplet_loss_euclidean");
  if (alpha < 0.0) throw Error("triplet_loss_euclidean: alpha must be >= 0");

  const double hinge =
      (f_a - f_p).squaredNorm() - (f_a - f_n).squaredNorm() + alpha;
  LossOutput out;
  out.grad_embeddings = Matrix::Zero(3, f_a.size());
  if (hinge > 0.0) {
    out.value = hinge;
    out.grad_embeddings.row(0) = 2.0 * (f_n - f_p);
    out.grad_embeddings.row(1) = 2.0 * (f_p - f_a);
    out.grad_embeddings.row(2) = 2.0 * (f_a - f_n);
  }
  return out;
}

LossOutput triplet_loss_cosine(const Vector& f_a, const Vector& f_p,
                               const Vector& f_n, double alpha) {
  require_same_dim(f_a, f_p, "triplet_loss_cosine");
  require_same_dim(f_a, f_n, "triplet_loss_cosine");
  if (alpha < 0.0) throw Error("triplet_loss_cosine: alpha must be >= 0");
  require_unit(f_a, "triplet_loss_cosine");
  require_unit(f_p, "triplet_loss_cosine");
  require_unit(f_n, "triplet_loss_cosine");

  const double hinge = f_a.dot(f_n) - f_a.dot(f_p) + alpha;
  LossOutput out;
  out.grad_embeddings = Matrix::Zero(3, f_a.size());
  if (hinge > 0.0) {
    out.value = hinge;
    out.grad_embeddings.row(0) = f_n - f_p;
    out.grad_embeddings.row(1) = -f_a;
    out.grad_embeddings.row(2) = f_a;
  }
  return out;
}

namespace {

// Anchor/positive row indices per class, in order of first appearance.
std::vector<std::pair<int, int>> npair_pairs(const EmbeddingBatch& batch) {
  std::map<int, std::vector<int>> by_class;
  for (Eigen::Index i = 0; i < batch.size(); ++i)
    by_class[batch.labels[i]].push_back(static_cast<int>(i));
  for (const auto& [label, rows] : by_class) {
    if (rows.size() != 2)
      throw BadBatchStructureError(
          "npair_loss: class " + std::to_string(label) + " has " +
          std::to_string(rows.size()) + " samples, need exactly 2");
  }
  // Pairs ordered by the anchor's position in the batch.
  std::vector<std::pair<int, int>> ordered;
  std::map<int, bool> emitted;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const int label = batch.labels[i];
    if (emitted[label]) continue;
    emitted[label] = true;
    const auto& rows = by_class[label];
    ordered.emplace_back(rows[0], rows[1]);
  }
  return ordered;
}

}  // namespace

LossOutput npair_loss(const EmbeddingBatch& batch, bool exponential_form) {
  batch.validate();
  const auto pairs = npair_pairs(batch);
  const int num_classes = static_cast<int>(pairs.size());

  LossOutput out;
  out.grad_embeddings = Matrix::Zero(batch.size(), batch.dim());
  if (num_classes < 1) return out;

  const Matrix& f = batch.data;
  double total = 0.0;
  for (int i = 0; i < num_classes; ++i) {
    const auto [a_i, p_i] = pairs[i];
    const double s_ii = f.row(a_i).dot(f.row(p_i));
    if (exponential_form) {
      Vector x(num_classes - 1);
      int k = 0;
      for (int j = 0; j < num_classes; ++j) {
        if (j == i) continue;
        x[k++] = f.row(pairs[j].second).dot(f.row(a_i)) - s_ii;
      }
      total += log1p_sum_exp(x);
      const Vector w = log1p_sum_exp_weights(x);
      double w_sum = 0.0;
      k = 0;
      for (int j = 0; j < num_classes; ++j) {
        if (j == i) continue;
        const int p_j = pairs[j].second;
        const double wj = w[k++];
        w_sum += wj;
        out.grad_embeddings.row(a_i) += wj * f.row(p_j);
        out.grad_embeddings.row(p_j) += wj * f.row(a_i);
      }
      out.grad_embeddings.row(a_i) -= w_sum * f.row(p_i);
      out.grad_embeddings.row(p_i) -= w_sum * f.row(a_i);
    } else {
      double inner = 1.0;
      for (int j = 0; j < num_classes; ++j) {
        if (j == i) continue;
        inner += f.row(pairs[j].second).dot(f.row(a_i)) - s_ii;
      }
      if (inner <= 0.0)
        throw NonFiniteLossError(
            "npair_loss: non-exponential form has non-positive log argument");
      total += std::log(inner);
      const double g = 1.0 / inner;
      for (int j = 0; j < num_classes; ++j) {
        if (j == i) continue;
        const int p_j = pairs[j].second;
        out.grad_embeddings.row(a_i) += g * (f.row(p_j) - f.row(p_i));
        out.grad_embeddings.row(p_j) += g * f.row(a_i);
      }
      out.grad_embeddings.row(p_i) -= g * (num_classes - 1) * f.row(a_i);
    }
  }
  out.value = total / num_classes;
  out.grad_embeddings /= num_classes;
  return out;
}

MsMiningMasks ms_mine(const SimilarityMatrix& similarity,
                      const IntVector& labels, double epsilon) {
  const Matrix& s = similarity.values;
  if (similarity.metric != Metric::kCosine)
    throw Error("ms_mine: expected a cosine similarity matrix");
  if (s.rows() != s.cols())
    throw DimensionMismatchError("ms_mine: similarity matrix must be square");
  if (labels.size() != s.rows())
    throw DimensionMismatchError("ms_mine: labels length mismatch");
  if (epsilon < 0.0) throw Error("ms_mine: epsilon must be >= 0");

  const Eigen::Index b = s.rows();
  MsMiningMasks masks;
  masks.epsilon = epsilon;
  masks.positive_mask = BoolMatrix::Constant(b, b, false);
  masks.negative_mask = BoolMatrix::Constant(b, b, false);

  for (Eigen::Index i = 0; i < b; ++i) {
    double min_pos = std::numeric_limits<double>::infinity();
    double max_neg = -std::numeric_limits<double>::infinity();
    bool has_pos = false, has_neg = false;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        has_pos = true;
        min_pos = std::min(min_pos, s(i, j));
      } else {
        has_neg = true;
        max_neg = std::max(max_neg, s(i, j));
      }
    }
    if (!has_pos) {
      ++masks.anchors_without_positive;
      continue;
    }
    if (!has_neg) {
      ++masks.anchors_without_negative;
      continue;
    }
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        masks.positive_mask(i, j) = s(i, j) < max_neg + epsilon;
      } else {
        masks.negative_mask(i, j) = s(i, j) > min_pos - epsilon;
      }
    }
  }
  return masks;
}

LossOutput ms_loss(const EmbeddingBatch& batch, const MsMiningMasks& masks,
                   double alpha, double beta, double lambda) {
  batch.validate();
  if (alpha <= 0.0 || beta <= 0.0)
    throw Error("ms_loss: alpha and beta must be positive");
  const Eigen::Index b = batch.size();
  if (masks.positive_mask.rows() != b || masks.positive_mask.cols() != b ||
      masks.negative_mask.rows() != b || masks.negative_mask.cols() != b)
    throw DimensionMismatchError("ms_loss: mask shape mismatch");

  const Matrix& f = batch.data;
  const Matrix s = f * f.transpose();  // rows expected pre-normalized

  LossOutput out;
  out.grad_embeddings = Matrix::Zero(b, batch.dim());
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    std::vector<int> pos, neg;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (masks.positive_mask(i, j)) pos.push_back(static_cast<int>(j));
      if (masks.negative_mask(i, j)) neg.push_back(static_cast<int>(j));
    }
    if (!pos.empty()) {
      Vector x(pos.size());
      for (std::size_t k = 0; k < pos.size(); ++k)
        x[k] = -alpha * (s(i, pos[k]) - lambda);
      total += log1p_sum_exp(x) / alpha;
      const Vector w = log1p_sum_exp_weights(x);
      for (std::size_t k = 0; k < pos.size(); ++k) {
        const double g = -w[k];  // d term / d s_ip
        out.grad_embeddings.row(i) += g * f.row(pos[k]);
        out.grad_embeddings.row(pos[k]) += g * f.row(i);
      }
    }
    if (!neg.empty()) {
      Vector x(neg.size());
      for (std::size_t k = 0; k < neg.size(); ++k)
        x[k] = beta * (s(i, neg[k]) - lambda);
      total += log1p_sum_exp(x) / beta;
      const Vector w = log1p_sum_exp_weights(x);
      for (std::size_t k = 0; k < neg.size(); ++k) {
        const double g = w[k];
        out.grad_embeddings.row(i) += g * f.row(neg[k]);
        out.grad_embeddings.row(neg[k]) += g * f.row(i);
      }
    }
  }
  out.value = total / static_cast<double>(b);
  out.grad_embeddings /= static_cast<double>(b);
  return out;
}

}  // namespace metricforge
