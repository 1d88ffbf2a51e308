#include "metricforge/regularizers.hpp"

#include <algorithm>
#include <cmath>

#include "metricforge/numerics.hpp"
#include "metricforge/rng.hpp"

namespace metricforge {

LabelEmbeddingTable synthetic_label_table(const std::vector<int>& class_ids,
                                          int dim, std::uint64_t seed) {
  if (dim < 1) throw Error("synthetic_label_table: dim must be >= 1");
  std::vector<int> ids = class_ids;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  Rng rng(seed);
  LabelEmbeddingTable table;
  table.source = "synthetic";
  for (const int id : ids) {
    Vector v(dim);
    for (int k = 0; k < dim; ++k) v[k] = rng.gaussian();
    table.vectors[id] = l2_normalize(v);
  }
  return table;
}

SimilarityMatrix label_similarity_matrix(const LabelEmbeddingTable& table,
                                         const IntVector& labels) {
  const Eigen::Index b = labels.size();
  if (b == 0) throw EmptyInputError("label_similarity_matrix: empty labels");
  const Eigen::Index dim = table.at(labels[0]).size();
  Matrix rows(b, dim);
  for (Eigen::Index i = 0; i < b; ++i) {
    const Vector& v = table.at(labels[i]);
    if (v.size() != dim)
      throw DimensionMismatchError(
          "label_similarity_matrix: inconsistent vector sizes in table");
    rows.row(i) = v;
  }
  return SimilarityMatrix{cosine_matrix(rows, rows), Metric::kCosine,
                          IndexKind::kSample, IndexKind::kSample};
}

namespace {

Vector log_softmax_row(const Vector& row) {
  const double lse = log_sum_exp(row);
  return row.array() - lse;
}

// Mean row-wise KL(softmax(s_i) || softmax(s_l + gamma_l)) and its gradient
// with respect to s_i.
std::pair<double, Matrix> kl_rows(const Matrix& s_i, const Matrix& s_l,
                                  double gamma_l) {
  const Eigen::Index c = s_i.rows();
  double total = 0.0;
  Matrix grad = Matrix::Zero(c, s_i.cols());
  for (Eigen::Index i = 0; i < c; ++i) {
    const Vector log_p = log_softmax_row(s_i.row(i));
    const Vector log_q =
        log_softmax_row(s_l.row(i).array() + gamma_l);
    const Vector p = log_p.array().exp();
    const double kl = (p.array() * (log_p - log_q).array()).sum();
    total += kl;
    grad.row(i) =
        (p.array() * ((log_p - log_q).array() - kl)).transpose() / c;
  }
  return {total / c, std::move(grad)};
}

}  // namespace

LossOutput language_distill_loss(const SimilarityMatrix& s_img,
                                 const SimilarityMatrix& s_lang,
                                 double gamma_l) {
  const Matrix& si = s_img.values;
  const Matrix& sl = s_lang.values;
  if (si.rows() != si.cols())
    throw DimensionMismatchError("language_distill_loss: matrix not square");
  if (si.rows() != sl.rows() || si.cols() != sl.cols())
    throw DimensionMismatchError("language_distill_loss: shape mismatch");

  auto [value, grad] = kl_rows(si, sl, gamma_l);
  LossOutput out;
  out.value = value;
  out.grad_embeddings = std::move(grad);
  return out;
}

LossOutput combine_with_language(const LossOutput& dml, const LossOutput& lang,
                                 double omega) {
  if (dml.grad_embeddings.rows() != lang.grad_embeddings.rows() ||
      dml.grad_embeddings.cols() != lang.grad_embeddings.cols())
    throw ShapeMismatchError("combine_with_language: gradient shape mismatch");
  LossOutput out;
  out.value = dml.value + omega * lang.value;
  out.grad_embeddings = dml.grad_embeddings + omega * lang.grad_embeddings;
  if (dml.grad_proxies && lang.grad_proxies) {
    if (dml.grad_proxies->rows() != lang.grad_proxies->rows() ||
        dml.grad_proxies->cols() != lang.grad_proxies->cols())
      throw ShapeMismatchError("combine_with_language: proxy grad mismatch");
    out.grad_proxies = *dml.grad_proxies + omega * *lang.grad_proxies;
  } else if (dml.grad_proxies) {
    out.grad_proxies = dml.grad_proxies;
  } else if (lang.grad_proxies) {
    out.grad_proxies = omega * *lang.grad_proxies;
  }
  return out;
}

LossOutput language_distill_on_batch(const EmbeddingBatch& batch,
                                     const LabelEmbeddingTable& table,
                                     double gamma_l) {
  batch.validate();
  const CosineSim sim = cosine_forward(batch.data, batch.data);
  const SimilarityMatrix teacher = label_similarity_matrix(table, batch.labels);
  auto [value, grad_s] = kl_rows(sim.values, teacher.values, gamma_l);

  LossOutput out;
  out.value = value;
  out.grad_embeddings = Matrix::Zero(batch.size(), batch.dim());
  cosine_backward(sim, grad_s, out.grad_embeddings, out.grad_embeddings);
  return out;
}

DirectionCos direction_cos(const Vector& f_a, const Vector& f_p,
                           const Vector& f_n) {
  if (f_a.size() != f_p.size() || f_a.size() != f_n.size())
    throw DimensionMismatchError("direction_cos: dimension mismatch");
  constexpr double kDirEpsilon = 1e-9;
  const Vector u = f_n - f_a;
  const Vector v = f_p - f_a;
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu <= kDirEpsilon || nv <= kDirEpsilon)
    throw DegenerateDirectionError(
        "direction_cos: displacement vector below 1e-9");

  DirectionCos out;
  out.value = u.dot(v) / (nu * nv);
  const Vector u_hat = u / nu;
  const Vector v_hat = v / nv;
  const Vector dc_du = (v_hat - out.value * u_hat) / nu;
  const Vector dc_dv = (u_hat - out.value * v_hat) / nv;
  out.grad_negative = dc_du;
  out.grad_positive = dc_dv;
  out.grad_anchor = -(dc_du + dc_dv);
  return out;
}

LossOutput directed_triplet_loss(const Vector& f_a, const Vector& f_p,
                                 const Vector& f_n, double alpha, double gamma,
                                 const DirectedOptions& opts) {
  if (f_a.size() != f_p.size() || f_a.size() != f_n.size())
    throw DimensionMismatchError("directed_triplet_loss: dimension mismatch");
  if (alpha < 0.0) throw Error("directed_triplet_loss: alpha must be >= 0");
  if (gamma < 0.0) throw Error("directed_triplet_loss: gamma must be >= 0");

  const double base =
      (f_a - f_p).squaredNorm() - (f_a - f_n).squaredNorm() + alpha;
  const double sign = opts.term == DirectionTerm::kPenalty ? 1.0 : -1.0;

  DirectionCos dir;
  double expr = base;
  if (gamma != 0.0) {
    dir = direction_cos(f_a, f_p, f_n);
    expr += sign * gamma * dir.value;
  }

  LossOutput out;
  out.grad_embeddings = Matrix::Zero(3, f_a.size());
  const bool active = opts.hinge ? expr > 0.0 : true;
  if (!active) return out;

  out.value = expr;
  out.grad_embeddings.row(0) = 2.0 * (f_n - f_p);
  out.grad_embeddings.row(1) = 2.0 * (f_p - f_a);
  out.grad_embeddings.row(2) = 2.0 * (f_a - f_n);
  if (gamma != 0.0) {
    out.grad_embeddings.row(0) += sign * gamma * dir.grad_anchor;
    out.grad_embeddings.row(1) += sign * gamma * dir.grad_positive;
    out.grad_embeddings.row(2) += sign * gamma * dir.grad_negative;
  }
  return out;
}

std::vector<int> hardest_mined_positive(const EmbeddingBatch& batch,
                                        const MsMiningMasks& masks) {
  const Eigen::Index b = batch.size();
  const Matrix s = batch.data * batch.data.transpose();
  std::vector<int> hardest(b, -1);
  for (Eigen::Index i = 0; i < b; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < b; ++j) {
      if (!masks.positive_mask(i, j)) continue;
      if (s(i, j) < best) {
        best = s(i, j);
        hardest[i] = static_cast<int>(j);
      }
    }
  }
  return hardest;
}

LossOutput directed_ms_loss_with_hardest(const EmbeddingBatch& batch,
                                         const MsMiningMasks& masks,
                                         const std::vector<int>& hardest_pos,
                                         double alpha, double beta,
                                         double lambda, double gamma,
                                         const DirectedOptions& opts) {
  batch.validate();
  if (alpha <= 0.0 || beta <= 0.0)
    throw Error("directed_ms_loss: alpha and beta must be positive");
  if (gamma < 0.0) throw Error("directed_ms_loss: gamma must be >= 0");
  const Eigen::Index b = batch.size();
  if (static_cast<Eigen::Index>(hardest_pos.size()) != b)
    throw DimensionMismatchError("directed_ms_loss: hardest_pos size mismatch");

  const Matrix& f = batch.data;
  const Matrix s = f * f.transpose();
  const double sign = opts.term == DirectionTerm::kPenalty ? 1.0 : -1.0;

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
        const double g = -w[k];
        out.grad_embeddings.row(i) += g * f.row(pos[k]);
        out.grad_embeddings.row(pos[k]) += g * f.row(i);
      }
    }
    if (!neg.empty()) {
      const int p_star = hardest_pos[i];
      const bool use_dir = gamma != 0.0 && p_star >= 0;
      std::vector<DirectionCos> dirs(neg.size());
      Vector x(neg.size());
      for (std::size_t k = 0; k < neg.size(); ++k) {
        double shift = 0.0;
        if (use_dir) {
          dirs[k] = direction_cos(f.row(i), f.row(p_star), f.row(neg[k]));
          shift = sign * gamma * dirs[k].value;
        }
        x[k] = beta * (s(i, neg[k]) - lambda + shift);
      }
      total += log1p_sum_exp(x) / beta;
      const Vector w = log1p_sum_exp_weights(x);
      for (std::size_t k = 0; k < neg.size(); ++k) {
        const double g = w[k];
        out.grad_embeddings.row(i) += g * f.row(neg[k]);
        out.grad_embeddings.row(neg[k]) += g * f.row(i);
        if (use_dir) {
          const double gc = w[k] * sign * gamma;
          out.grad_embeddings.row(i) += gc * dirs[k].grad_anchor;
          out.grad_embeddings.row(p_star) += gc * dirs[k].grad_positive;
          out.grad_embeddings.row(neg[k]) += gc * dirs[k].grad_negative;
        }
      }
    }
  }
  out.value = total / static_cast<double>(b);
  out.grad_embeddings /= static_cast<double>(b);
  return out;
}

LossOutput directed_ms_loss(const EmbeddingBatch& batch,
                            const MsMiningMasks& masks, double alpha,
                            double beta, double lambda, double gamma,
                            const DirectedOptions& opts) {
  return directed_ms_loss_with_hardest(batch, masks,
                                       hardest_mined_positive(batch, masks),
                                       alpha, beta, lambda, gamma, opts);
}

LossOutput directed_proxynca_loss(const EmbeddingBatch& batch,
                                  const ProxySet& proxies, double gamma,
                                  const DirectedOptions& opts) {
  if (gamma == 0.0) return proxynca_loss(batch, proxies);
  batch.validate();
  proxies.validate();
  if (gamma < 0.0) throw Error("directed_proxynca_loss: gamma must be >= 0");
  if (proxies.proxies_per_class != 1)
    throw Error("directed_proxynca_loss: requires one proxy per class");
  if (batch.dim() != proxies.dim())
    throw DimensionMismatchError("directed_proxynca_loss: dimension mismatch");
  if (proxies.num_classes() < 2)
    throw MissingProxyError("directed_proxynca_loss: need >= 2 proxy classes");

  const Eigen::Index b = batch.size();
  const Matrix& f = batch.data;
  const Matrix& p = proxies.vectors;
  const Matrix d = squared_distance_matrix(f, p);
  const double sign = opts.term == DirectionTerm::kPenalty ? 1.0 : -1.0;

  LossOutput out;
  out.grad_embeddings = Matrix::Zero(b, batch.dim());
  out.grad_proxies = Matrix::Zero(p.rows(), p.cols());

  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int pos = batch.labels[i];
    if (pos >= proxies.num_classes())
      throw MissingProxyError("directed_proxynca_loss: no proxy for class " +
                              std::to_string(pos));
    std::vector<int> negs;
    for (Eigen::Index k = 0; k < p.rows(); ++k)
      if (static_cast<int>(k) != pos) negs.push_back(static_cast<int>(k));

    std::vector<DirectionCos> dirs(negs.size());
    Vector z(negs.size());
    for (std::size_t k = 0; k < negs.size(); ++k) {
      dirs[k] = direction_cos(f.row(i), p.row(pos), p.row(negs[k]));
      z[k] = -d(i, negs[k]) + sign * gamma * dirs[k].value;
    }
    const double lse = log_sum_exp(z);
    total += d(i, pos) + lse;

    // d L_i / d D_pos = 1
    const Vector diff_pos = 2.0 * (f.row(i) - p.row(pos)).transpose();
    out.grad_embeddings.row(i) += diff_pos;
    out.grad_proxies->row(pos) -= diff_pos;
    for (std::size_t k = 0; k < negs.size(); ++k) {
      const double w = std::exp(z[k] - lse);
      const Vector diff_neg =
          2.0 * w * (f.row(i) - p.row(negs[k])).transpose();
      out.grad_embeddings.row(i) -= diff_neg;
      out.grad_proxies->row(negs[k]) += diff_neg;
      const double gc = w * sign * gamma;
      out.grad_embeddings.row(i) += gc * dirs[k].grad_anchor;
      out.grad_proxies->row(pos) += gc * dirs[k].grad_positive;
      out.grad_proxies->row(negs[k]) += gc * dirs[k].grad_negative;
    }
  }
  out.value = total / static_cast<double>(b);
  out.grad_embeddings /= static_cast<double>(b);
  *out.grad_proxies /= static_cast<double>(b);
  return out;
}

}  // namespace metricforge
