#include "metricforge/proxy_losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "metricforge/numerics.hpp"
#include "metricforge/rng.hpp"

namespace metricforge {

void ProxySet::validate() const {
  if (proxies_per_class < 1) throw Error("ProxySet: M must be >= 1");
  if (vectors.rows() != proxy_class.size())
    throw DimensionMismatchError("ProxySet: class map length mismatch");
  if (vectors.rows() % proxies_per_class != 0)
    throw BadBatchStructureError("ProxySet: rows not a multiple of M");
  // Class-major layout: row c*M + m belongs to class c. This also gives
  // every class exactly M proxies.
  for (Eigen::Index i = 0; i < proxy_class.size(); ++i)
    if (proxy_class[i] != static_cast<int>(i) / proxies_per_class)
      throw BadBatchStructureError(
          "ProxySet: proxies must be stored class-major");
  if (normalized) {
    for (Eigen::Index i = 0; i < vectors.rows(); ++i)
      if (std::abs(vectors.row(i).norm() - 1.0) > 1e-9)
        throw NotNormalizedError("ProxySet: row " + std::to_string(i) +
                                 " is not unit norm");
  }
}

ProxySet make_random_proxies(int num_classes, int proxies_per_class, int dim,
                             std::uint64_t seed) {
  if (num_classes < 1 || proxies_per_class < 1 || dim < 1)
    throw Error("make_random_proxies: bad shape");
  Rng rng(seed);
  ProxySet set;
  set.proxies_per_class = proxies_per_class;
  set.vectors.resize(num_classes * proxies_per_class, dim);
  set.proxy_class.resize(num_classes * proxies_per_class);
  for (int c = 0; c < num_classes; ++c) {
    for (int m = 0; m < proxies_per_class; ++m) {
      const int row = c * proxies_per_class + m;
      Vector v(dim);
      for (int k = 0; k < dim; ++k) v[k] = rng.gaussian();
      set.vectors.row(row) = l2_normalize(v);
      set.proxy_class[row] = c;
    }
  }
  set.normalized = true;
  return set;
}

namespace {

// Index of the single proxy of a class (M = 1 losses). Throws MissingProxy.
int sole_proxy_of_class(const ProxySet& proxies, int label, const char* who) {
  if (proxies.proxies_per_class != 1)
    throw Error(std::string(who) + ": requires one proxy per class");
  if (label < 0 || label >= proxies.num_classes())
    throw MissingProxyError(std::string(who) + ": no proxy for class " +
                            std::to_string(label));
  return label;  // class-major layout with M = 1
}

}  // namespace

LossOutput nca_loss(const EmbeddingBatch& batch) {
  batch.validate();
  const Eigen::Index b = batch.size();
  const Matrix& f = batch.data;
  const Matrix d = squared_distance_matrix(f, f);

  LossOutput out;
  out.grad_embeddings = Matrix::Zero(b, batch.dim());
  Matrix grad_d = Matrix::Zero(b, b);

  int valid = 0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    std::vector<int> pos, all;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == i) continue;
      all.push_back(static_cast<int>(j));
      if (batch.labels[j] == batch.labels[i]) pos.push_back(static_cast<int>(j));
    }
    if (pos.empty()) continue;
    ++valid;

    Vector num_exps(pos.size()), den_exps(all.size());
    for (std::size_t k = 0; k < pos.size(); ++k) num_exps[k] = -d(i, pos[k]);
    for (std::size_t k = 0; k < all.size(); ++k) den_exps[k] = -d(i, all[k]);
    const double log_num = log_sum_exp(num_exps);
    const double log_den = log_sum_exp(den_exps);
    total += log_den - log_num;

    for (std::size_t k = 0; k < pos.size(); ++k)
      grad_d(i, pos[k]) += std::exp(num_exps[k] - log_num);
    for (std::size_t k = 0; k < all.size(); ++k)
      grad_d(i, all[k]) -= std::exp(den_exps[k] - log_den);
  }
  if (valid == 0)
    throw NoPositiveError("nca_loss: no sample has a same-class neighbor");

  out.value = total / valid;
  grad_d /= valid;
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) {
      const double g = grad_d(i, j);
      if (g == 0.0) continue;
      const Vector diff = 2.0 * g * (f.row(i) - f.row(j));
      out.grad_embeddings.row(i) += diff;
      out.grad_embeddings.row(j) -= diff;
    }
  }
  return out;
}

LossOutput proxynca_loss(const EmbeddingBatch& batch, const ProxySet& proxies) {
  batch.validate();
  proxies.validate();
  if (batch.dim() != proxies.dim())
    throw DimensionMismatchError("proxynca_loss: dimension mismatch");
  if (proxies.num_classes() < 2)
    throw MissingProxyError("proxynca_loss: need at least two proxy classes");

  const Eigen::Index b = batch.size();
  const Matrix& f = batch.data;
  const Matrix& p = proxies.vectors;
  const Matrix d = squared_distance_matrix(f, p);

  LossOutput out;
  out.grad_embeddings = Matrix::Zero(b, batch.dim());
  out.grad_proxies = Matrix::Zero(p.rows(), p.cols());
  Matrix grad_d = Matrix::Zero(d.rows(), d.cols());

  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int pos = sole_proxy_of_class(proxies, batch.labels[i], "proxynca_loss");
    std::vector<int> negs;
    for (Eigen::Index k = 0; k < p.rows(); ++k)
      if (proxies.proxy_class[k] != batch.labels[i])
        negs.push_back(static_cast<int>(k));

    Vector x(negs.size());
    for (std::size_t k = 0; k < negs.size(); ++k) x[k] = -d(i, negs[k]);
    const double log_den = log_sum_exp(x);
    total += d(i, pos) + log_den;

    grad_d(i, pos) += 1.0;
    for (std::size_t k = 0; k < negs.size(); ++k)
      grad_d(i, negs[k]) -= std::exp(x[k] - log_den);
  }
  out.value = total / static_cast<double>(b);
  grad_d /= static_cast<double>(b);

  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index k = 0; k < p.rows(); ++k) {
      const double g = grad_d(i, k);
      if (g == 0.0) continue;
      const Vector diff = 2.0 * g * (f.row(i) - p.row(k));
      out.grad_embeddings.row(i) += diff;
      out.grad_proxies->row(k) -= diff;
    }
  }
  return out;
}

LossOutput proxynca_pp_loss(const EmbeddingBatch& batch,
                            const ProxySet& proxies, double temperature) {
  batch.validate();
  proxies.validate();
  if (temperature <= 0.0)
    throw NonPositiveTemperatureError("proxynca_pp_loss: temperature <= 0");
  if (batch.dim() != proxies.dim())
    throw DimensionMismatchError("proxynca_pp_loss: dimension mismatch");

  const Eigen::Index b = batch.size();
  const Matrix& f = batch.data;
  const Matrix& p = proxies.vectors;
  const Matrix d = squared_distance_matrix(f, p);

  LossOutput out;
  out.grad_embeddings = Matrix::Zero(b, batch.dim());
  out.grad_proxies = Matrix::Zero(p.rows(), p.cols());
  Matrix grad_d = Matrix::Zero(d.rows(), d.cols());

  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int pos =
        sole_proxy_of_class(proxies, batch.labels[i], "proxynca_pp_loss");
    Vector x = -d.row(i).transpose() / temperature;
    const double lse = log_sum_exp(x);
    total += lse - x[pos];
    for (Eigen::Index k = 0; k < p.rows(); ++k) {
      const double prob = std::exp(x[k] - lse);
      grad_d(i, k) += ((k == pos ? 1.0 : 0.0) - prob) / temperature;
    }
  }
  out.value = total / static_cast<double>(b);
  grad_d /= static_cast<double>(b);

  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index k = 0; k < p.rows(); ++k) {
      const double g = grad_d(i, k);
      if (g == 0.0) continue;
      const Vector diff = 2.0 * g * (f.row(i) - p.row(k));
      out.grad_embeddings.row(i) += diff;
      out.grad_proxies->row(k) -= diff;
    }
  }
  return out;
}

double proxy_anchor_value_from_similarity(const Matrix& s,
                                          const IntVector& labels,
                                          const IntVector& proxy_class,
                                          double alpha, double delta) {
  if (alpha <= 0.0) throw Error("proxy_anchor: alpha must be > 0");
  if (delta < 0.0) throw Error("proxy_anchor: delta must be >= 0");
  const Eigen::Index b = s.rows();
  const Eigen::Index np = s.cols();
  if (labels.size() != b || proxy_class.size() != np)
    throw DimensionMismatchError("proxy_anchor: shape mismatch");

  std::vector<bool> class_in_batch;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y >= static_cast<int>(class_in_batch.size()))
      class_in_batch.resize(y + 1, false);
    class_in_batch[y] = true;
  }

  int num_pos_proxies = 0;
  for (Eigen::Index k = 0; k < np; ++k)
    if (proxy_class[k] < static_cast<int>(class_in_batch.size()) &&
        class_in_batch[proxy_class[k]])
      ++num_pos_proxies;
  if (num_pos_proxies == 0)
    throw MissingProxyError("proxy_anchor: no proxy matches a batch class");

  double pos_total = 0.0, neg_total = 0.0;
  for (Eigen::Index k = 0; k < np; ++k) {
    std::vector<double> pos_x, neg_x;
    for (Eigen::Index i = 0; i < b; ++i) {
      if (labels[i] == proxy_class[k])
        pos_x.push_back(-alpha * (s(i, k) - delta));
      else
        neg_x.push_back(alpha * (s(i, k) + delta));
    }
    if (!pos_x.empty())
      pos_total += log1p_sum_exp(Eigen::Map<Vector>(pos_x.data(), pos_x.size()));
    if (!neg_x.empty())
      neg_total += log1p_sum_exp(Eigen::Map<Vector>(neg_x.data(), neg_x.size()));
  }
  return pos_total / num_pos_proxies + neg_total / static_cast<double>(np);
}

Matrix proxy_anchor_grad_wrt_similarity(const Matrix& s,
                                        const IntVector& labels,
                                        const IntVector& proxy_class,
                                        double alpha, double delta) {
  const Eigen::Index b = s.rows();
  const Eigen::Index np = s.cols();
  if (labels.size() != b || proxy_class.size() != np)
    throw DimensionMismatchError("proxy_anchor: shape mismatch");

  std::vector<bool> class_in_batch;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y >= static_cast<int>(class_in_batch.size()))
      class_in_batch.resize(y + 1, false);
    class_in_batch[y] = true;
  }
  int num_pos_proxies = 0;
  for (Eigen::Index k = 0; k < np; ++k)
    if (proxy_class[k] < static_cast<int>(class_in_batch.size()) &&
        class_in_batch[proxy_class[k]])
      ++num_pos_proxies;
  if (num_pos_proxies == 0)
    throw MissingProxyError("proxy_anchor: no proxy matches a batch class");

  Matrix grad = Matrix::Zero(b, np);
  for (Eigen::Index k = 0; k < np; ++k) {
    std::vector<int> pos_rows, neg_rows;
    for (Eigen::Index i = 0; i < b; ++i) {
      if (labels[i] == proxy_class[k]) pos_rows.push_back(static_cast<int>(i));
      else neg_rows.push_back(static_cast<int>(i));
    }
    if (!pos_rows.empty()) {
      Vector x(pos_rows.size());
      for (std::size_t j = 0; j < pos_rows.size(); ++j)
        x[j] = -alpha * (s(pos_rows[j], k) - delta);
      const Vector w = log1p_sum_exp_weights(x);
      for (std::size_t j = 0; j < pos_rows.size(); ++j)
        grad(pos_rows[j], k) += -alpha * w[j] / num_pos_proxies;
    }
    if (!neg_rows.empty()) {
      Vector x(neg_rows.size());
      for (std::size_t j = 0; j < neg_rows.size(); ++j)
        x[j] = alpha * (s(neg_rows[j], k) + delta);
      const Vector w = log1p_sum_exp_weights(x);
      for (std::size_t j = 0; j < neg_rows.size(); ++j)
        grad(neg_rows[j], k) += alpha * w[j] / static_cast<double>(np);
    }
  }
  return grad;
}

LossOutput proxy_anchor_loss(const EmbeddingBatch& batch,
                             const ProxySet& proxies, double alpha,
                             double delta) {
  batch.validate();
  proxies.validate();
  if (proxies.proxies_per_class != 1)
    throw Error("proxy_anchor_loss: requires one proxy per class");
  if (batch.dim() != proxies.dim())
    throw DimensionMismatchError("proxy_anchor_loss: dimension mismatch");
  for (Eigen::Index i = 0; i < batch.size(); ++i)
    if (batch.labels[i] >= proxies.num_classes())
      throw MissingProxyError("proxy_anchor_loss: no proxy for class " +
                              std::to_string(batch.labels[i]));

  const CosineSim sim = cosine_forward(batch.data, proxies.vectors);
  const double value = proxy_anchor_value_from_similarity(
      sim.values, batch.labels, proxies.proxy_class, alpha, delta);
  const Matrix grad_s = proxy_anchor_grad_wrt_similarity(
      sim.values, batch.labels, proxies.proxy_class, alpha, delta);

  LossOutput out;
  out.value = value;
  out.grad_embeddings = Matrix::Zero(batch.size(), batch.dim());
  out.grad_proxies = Matrix::Zero(proxies.size(), proxies.dim());
  cosine_backward(sim, grad_s, out.grad_embeddings, *out.grad_proxies);
  return out;
}

std::vector<std::vector<int>> proxygml_select(const SimilarityMatrix& s_p,
                                              const IntVector& labels,
                                              const ProxyGmlConfig& cfg) {
  const Matrix& s = s_p.values;
  const Eigen::Index np = s.rows();
  const Eigen::Index b = s.cols();
  if (labels.size() != b)
    throw DimensionMismatchError("proxygml_select: labels length mismatch");
  if (cfg.M < 1 || np % cfg.M != 0)
    throw Error("proxygml_select: bad M for the given proxy count");
  if (cfg.K < cfg.M || cfg.K > np)
    throw KOutOfRangeError("proxygml_select: need M <= K <= M*C");

  std::vector<std::vector<int>> selection(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const int y = labels[i];
    std::vector<int> own, others;
    for (Eigen::Index j = 0; j < np; ++j) {
      const int c = static_cast<int>(j) / cfg.M;
      if (c == y) own.push_back(static_cast<int>(j));
      else others.push_back(static_cast<int>(j));
    }
    if (static_cast<int>(own.size()) != cfg.M)
      throw MissingProxyError("proxygml_select: class " + std::to_string(y) +
                              " does not own M proxies");
    // Most similar first; ties go to the lowest proxy index.
    std::stable_sort(others.begin(), others.end(), [&](int a, int c2) {
      if (s(a, i) != s(c2, i)) return s(a, i) > s(c2, i);
      return a < c2;
    });
    std::vector<int>& sel = selection[i];
    sel = own;
    sel.insert(sel.end(), others.begin(), others.begin() + (cfg.K - cfg.M));
    std::sort(sel.begin(), sel.end());
  }
  return selection;
}

namespace {

LossOutput proxygml_core(const EmbeddingBatch& batch, const ProxySet& proxies,
                         const ProxyGmlConfig& cfg,
                         const std::vector<std::vector<int>>& selection) {
  const Eigen::Index b = batch.size();
  const Eigen::Index np = proxies.size();
  const int c = proxies.num_classes();
  const Matrix& f = batch.data;
  const Matrix& p = proxies.vectors;

  for (Eigen::Index i = 0; i < b; ++i)
    if (batch.labels[i] >= c)
      throw MissingProxyError("proxygml_loss: no proxies for class " +
                              std::to_string(batch.labels[i]));

  const Matrix s_p = p * f.transpose();  // (M*C) x B raw dot products

  LossOutput out;
  out.grad_embeddings = Matrix::Zero(b, batch.dim());
  out.grad_proxies = Matrix::Zero(np, batch.dim());
  Matrix grad_sp = Matrix::Zero(np, b);

  // Classification term: class-aggregated similarities, masked softmax, NLL.
  double ce_total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    Vector agg = Vector::Zero(c);
    BoolVector mask = BoolVector::Constant(c, false);
    for (const int j : selection[i]) {
      const int cls = proxies.proxy_class[j];
      agg[cls] += s_p(j, i);
      mask[cls] = true;
    }
    if (!mask[batch.labels[i]])
      throw DegenerateRowError("proxygml_loss: own class missing from row " +
                               std::to_string(i));
    const Vector prob = masked_softmax(agg, mask);
    ce_total += -std::log(prob[batch.labels[i]]);
    for (const int j : selection[i]) {
      const int cls = proxies.proxy_class[j];
      const double g =
          (prob[cls] - (cls == batch.labels[i] ? 1.0 : 0.0)) / b;
      grad_sp(j, i) += g;
    }
  }

  // Proxy-to-proxy regularizer: same class aggregation over all proxies.
  double reg_total = 0.0;
  Matrix grad_pp = Matrix::Zero(np, np);
  if (cfg.lambda != 0.0) {
    const Matrix sp = p * p.transpose();
    for (Eigen::Index i = 0; i < np; ++i) {
      Vector agg = Vector::Zero(c);
      for (Eigen::Index j = 0; j < np; ++j)
        agg[proxies.proxy_class[j]] += sp(i, j);
      const Vector x = agg;
      const double lse = log_sum_exp(x);
      const int y = proxies.proxy_class[i];
      reg_total += lse - x[y];
      for (Eigen::Index j = 0; j < np; ++j) {
        const int cls = proxies.proxy_class[j];
        const double prob = std::exp(x[cls] - lse);
        grad_pp(i, j) +=
            cfg.lambda * (prob - (cls == y ? 1.0 : 0.0)) / static_cast<double>(np);
      }
    }
    reg_total /= static_cast<double>(np);
  }

  out.value = ce_total / static_cast<double>(b) + cfg.lambda * reg_total;

  // Chain rule through the two dot-product blocks.
  for (Eigen::Index j = 0; j < np; ++j) {
    for (Eigen::Index i = 0; i < b; ++i) {
      const double g = grad_sp(j, i);
      if (g == 0.0) continue;
      out.grad_proxies->row(j) += g * f.row(i);
      out.grad_embeddings.row(i) += g * p.row(j);
    }
  }
  if (cfg.lambda != 0.0) {
    for (Eigen::Index i = 0; i < np; ++i) {
      for (Eigen::Index j = 0; j < np; ++j) {
        const double g = grad_pp(i, j);
        if (g == 0.0) continue;
        out.grad_proxies->row(i) += g * p.row(j);
        out.grad_proxies->row(j) += g * p.row(i);
      }
    }
  }
  return out;
}

}  // namespace

LossOutput proxygml_loss_with_selection(
    const EmbeddingBatch& batch, const ProxySet& proxies,
    const ProxyGmlConfig& cfg, const std::vector<std::vector<int>>& selection) {
  batch.validate();
  proxies.validate();
  if (cfg.M != proxies.proxies_per_class)
    throw Error("proxygml_loss: cfg.M disagrees with the proxy set");
  if (batch.dim() != proxies.dim())
    throw DimensionMismatchError("proxygml_loss: dimension mismatch");
  if (static_cast<Eigen::Index>(selection.size()) != batch.size())
    throw DimensionMismatchError("proxygml_loss: selection size mismatch");
  return proxygml_core(batch, proxies, cfg, selection);
}

LossOutput proxygml_loss(const EmbeddingBatch& batch, const ProxySet& proxies,
                         const ProxyGmlConfig& cfg) {
  batch.validate();
  proxies.validate();
  if (cfg.M != proxies.proxies_per_class)
    throw Error("proxygml_loss: cfg.M disagrees with the proxy set");
  if (batch.dim() != proxies.dim())
    throw DimensionMismatchError("proxygml_loss: dimension mismatch");

  const Matrix s_p = proxies.vectors * batch.data.transpose();
  SimilarityMatrix sim{s_p, Metric::kCosine, IndexKind::kProxy,
                       IndexKind::kSample};
  const auto selection = proxygml_select(sim, batch.labels, cfg);
  return proxygml_core(batch, proxies, cfg, selection);
}

}  // namespace metricforge
