#include <cmath>

#include "metricforge/gradcheck.hpp"
#include "metricforge/numerics.hpp"
#include "metricforge/pair_losses.hpp"
#include "metricforge/proxy_losses.hpp"
#include "metricforge/regularizers.hpp"
#include "metricforge/rng.hpp"

namespace metricforge {

namespace {

Vector random_unit(Rng& rng, int dim) {
  Vector v(dim);
  for (int k = 0; k < dim; ++k) v[k] = rng.gaussian();
  return l2_normalize(v);
}

Matrix random_unit_rows(Rng& rng, int rows, int dim) {
  Matrix m(rows, dim);
  for (int i = 0; i < rows; ++i) m.row(i) = random_unit(rng, dim);
  return m;
}

Matrix random_rows(Rng& rng, int rows, int dim) {
  Matrix m(rows, dim);
  for (int i = 0; i < rows; ++i)
    for (int k = 0; k < dim; ++k) m(i, k) = rng.gaussian();
  return m;
}

IntVector paired_labels(int classes) {
  IntVector labels(2 * classes);
  for (int c = 0; c < classes; ++c) {
    labels[2 * c] = c;
    labels[2 * c + 1] = c;
  }
  return labels;
}

// Mixes the loss-specific salt into the seed so each registry entry sees an
// independent stream for the same seed.
Rng make_rng(std::uint64_t seed, std::uint64_t salt) {
  return Rng(seed * 0x9E3779B97F4A7C15ULL + salt);
}

CheckCase gen_contrastive(std::uint64_t seed) {
  Rng rng = make_rng(seed, 1);
  const int d = 5;
  const double alpha = 1.0;
  const bool same = seed % 2 == 0;
  Vector f_i = random_rows(rng, 1, d).row(0);
  Vector f_j = random_rows(rng, 1, d).row(0);
  if (!same) {
    while (std::abs(alpha - (f_i - f_j).squaredNorm()) < 1e-2)
      f_j = random_rows(rng, 1, d).row(0);
  }
  Matrix stacked(2, d);
  stacked.row(0) = f_i;
  stacked.row(1) = f_j;

  CheckCase c;
  c.input_names = {"embeddings"};
  c.inputs = {stacked};
  c.value = [same, alpha](const MatrixList& in) {
    return contrastive_loss(in[0].row(0), in[0].row(1), same, alpha).value;
  };
  c.analytic = {contrastive_loss(f_i, f_j, same, alpha).grad_embeddings};
  c.kink_distance = same ? std::numeric_limits<double>::infinity()
                         : std::abs(alpha - (f_i - f_j).squaredNorm());
  return c;
}

CheckCase gen_triplet(std::uint64_t seed, bool cosine) {
  Rng rng = make_rng(seed, cosine ? 3 : 2);
  const int d = 5;
  const double alpha = cosine ? 0.3 : 0.5;
  Matrix t;
  double hinge = 0.0;
  do {
    t = random_unit_rows(rng, 3, d);
    hinge = cosine ? t.row(0).dot(t.row(2)) - t.row(0).dot(t.row(1)) + alpha
                   : (t.row(0) - t.row(1)).squaredNorm() -
                         (t.row(0) - t.row(2)).squaredNorm() + alpha;
  } while (std::abs(hinge) < 1e-2);

  CheckCase c;
  c.input_names = {"embeddings"};
  c.inputs = {t};
  c.value = [cosine, alpha](const MatrixList& in) {
    return cosine ? triplet_loss_cosine(in[0].row(0), in[0].row(1),
                                        in[0].row(2), alpha)
                        .value
                  : triplet_loss_euclidean(in[0].row(0), in[0].row(1),
                                           in[0].row(2), alpha)
                        .value;
  };
  c.analytic = {
      (cosine ? triplet_loss_cosine(t.row(0), t.row(1), t.row(2), alpha)
              : triplet_loss_euclidean(t.row(0), t.row(1), t.row(2), alpha))
          .grad_embeddings};
  c.kink_distance = std::abs(hinge);
  return c;
}

CheckCase gen_npair(std::uint64_t seed) {
  Rng rng = make_rng(seed, 4);
  const int classes = 4, d = 6;
  EmbeddingBatch batch{random_unit_rows(rng, 2 * classes, d),
                       paired_labels(classes), false};
  CheckCase c;
  c.input_names = {"embeddings"};
  c.inputs = {batch.data};
  const IntVector labels = batch.labels;
  c.value = [labels](const MatrixList& in) {
    return npair_loss(EmbeddingBatch{in[0], labels, false}).value;
  };
  c.analytic = {npair_loss(batch).grad_embeddings};
  return c;
}

CheckCase gen_ms(std::uint64_t seed, bool directed) {
  Rng rng = make_rng(seed, directed ? 12 : 5);
  const int classes = 4, d = 6;
  const double alpha = 2.0, beta = 50.0, lambda = 0.5, epsilon = 0.1;
  const double gamma = directed ? 0.5 : 0.0;
  EmbeddingBatch batch{random_unit_rows(rng, 2 * classes, d),
                       paired_labels(classes), false};
  const SimilarityMatrix sim = cosine_similarity_matrix(batch, batch);
  const MsMiningMasks masks = ms_mine(sim, batch.labels, epsilon);
  const std::vector<int> hardest = hardest_mined_positive(batch, masks);

  CheckCase c;
  c.input_names = {"embeddings"};
  c.inputs = {batch.data};
  const IntVector labels = batch.labels;
  if (directed) {
    c.value = [labels, masks, hardest, alpha, beta, lambda,
               gamma](const MatrixList& in) {
      return directed_ms_loss_with_hardest(EmbeddingBatch{in[0], labels, false},
                                           masks, hardest, alpha, beta, lambda,
                                           gamma)
          .value;
    };
    c.analytic = {directed_ms_loss_with_hardest(batch, masks, hardest, alpha,
                                                beta, lambda, gamma)
                      .grad_embeddings};
  } else {
    c.value = [labels, masks, alpha, beta, lambda](const MatrixList& in) {
      return ms_loss(EmbeddingBatch{in[0], labels, false}, masks, alpha, beta,
                     lambda)
          .value;
    };
    c.analytic = {ms_loss(batch, masks, alpha, beta, lambda).grad_embeddings};
  }
  return c;
}

CheckCase gen_nca(std::uint64_t seed) {
  Rng rng = make_rng(seed, 6);
  const int classes = 3, d = 5;
  EmbeddingBatch batch{random_rows(rng, 2 * classes, d),
                       paired_labels(classes), false};
  CheckCase c;
  c.input_names = {"embeddings"};
  c.inputs = {batch.data};
  const IntVector labels = batch.labels;
  c.value = [labels](const MatrixList& in) {
    return nca_loss(EmbeddingBatch{in[0], labels, false}).value;
  };
  c.analytic = {nca_loss(batch).grad_embeddings};
  return c;
}

struct ProxyFixture {
  EmbeddingBatch batch;
  ProxySet proxies;
};

ProxyFixture make_proxy_fixture(Rng& rng, int batch_size, int classes, int m,
                                int d) {
  ProxyFixture fx;
  fx.batch.data = random_unit_rows(rng, batch_size, d);
  fx.batch.labels.resize(batch_size);
  for (int i = 0; i < batch_size; ++i)
    fx.batch.labels[i] = static_cast<int>(rng.bounded(classes));
  fx.proxies.proxies_per_class = m;
  fx.proxies.vectors = random_unit_rows(rng, classes * m, d);
  fx.proxies.proxy_class.resize(classes * m);
  for (int j = 0; j < classes * m; ++j) fx.proxies.proxy_class[j] = j / m;
  fx.proxies.normalized = false;  // perturbed copies will drift off-norm
  return fx;
}

ProxySet with_vectors(const ProxySet& base, const Matrix& vectors) {
  ProxySet p = base;
  p.vectors = vectors;
  return p;
}

CheckCase gen_proxynca(std::uint64_t seed, int variant) {
  // variant 0 = proxynca, 1 = proxynca_pp, 2 = directed_proxynca
  Rng rng = make_rng(seed, 7 + static_cast<std::uint64_t>(variant));
  const double temperature = 0.5, gamma = 0.5;
  ProxyFixture fx = make_proxy_fixture(rng, 5, 4, 1, 6);

  CheckCase c;
  c.input_names = {"embeddings", "proxies"};
  c.inputs = {fx.batch.data, fx.proxies.vectors};
  const IntVector labels = fx.batch.labels;
  const ProxySet base = fx.proxies;
  c.value = [labels, base, variant, temperature,
             gamma](const MatrixList& in) {
    const EmbeddingBatch b{in[0], labels, false};
    const ProxySet p = with_vectors(base, in[1]);
    if (variant == 0) return proxynca_loss(b, p).value;
    if (variant == 1) return proxynca_pp_loss(b, p, temperature).value;
    return directed_proxynca_loss(b, p, gamma).value;
  };
  const LossOutput out =
      variant == 0   ? proxynca_loss(fx.batch, fx.proxies)
      : variant == 1 ? proxynca_pp_loss(fx.batch, fx.proxies, temperature)
                     : directed_proxynca_loss(fx.batch, fx.proxies, gamma);
  c.analytic = {out.grad_embeddings, *out.grad_proxies};
  return c;
}

CheckCase gen_proxy_anchor(std::uint64_t seed) {
  Rng rng = make_rng(seed, 10);
  const double alpha = 16.0, delta = 0.1;
  ProxyFixture fx = make_proxy_fixture(rng, 6, 3, 1, 6);

  CheckCase c;
  c.input_names = {"embeddings", "proxies"};
  c.inputs = {fx.batch.data, fx.proxies.vectors};
  const IntVector labels = fx.batch.labels;
  const ProxySet base = fx.proxies;
  c.value = [labels, base, alpha, delta](const MatrixList& in) {
    return proxy_anchor_loss(EmbeddingBatch{in[0], labels, false},
                             with_vectors(base, in[1]), alpha, delta)
        .value;
  };
  const LossOutput out = proxy_anchor_loss(fx.batch, fx.proxies, alpha, delta);
  c.analytic = {out.grad_embeddings, *out.grad_proxies};
  return c;
}

CheckCase gen_proxygml(std::uint64_t seed) {
  Rng rng = make_rng(seed, 11);
  ProxyGmlConfig cfg;
  cfg.M = 2;
  cfg.K = 4;
  cfg.lambda = 0.3;
  ProxyFixture fx = make_proxy_fixture(rng, 6, 3, cfg.M, 6);
  const Matrix s_p = fx.proxies.vectors * fx.batch.data.transpose();
  const SimilarityMatrix sim{s_p, Metric::kCosine, IndexKind::kProxy,
                             IndexKind::kSample};
  const auto selection = proxygml_select(sim, fx.batch.labels, cfg);

  CheckCase c;
  c.input_names = {"embeddings", "proxies"};
  c.inputs = {fx.batch.data, fx.proxies.vectors};
  const IntVector labels = fx.batch.labels;
  const ProxySet base = fx.proxies;
  c.value = [labels, base, cfg, selection](const MatrixList& in) {
    return proxygml_loss_with_selection(EmbeddingBatch{in[0], labels, false},
                                        with_vectors(base, in[1]), cfg,
                                        selection)
        .value;
  };
  const LossOutput out =
      proxygml_loss_with_selection(fx.batch, fx.proxies, cfg, selection);
  c.analytic = {out.grad_embeddings, *out.grad_proxies};
  return c;
}

CheckCase gen_directed_triplet(std::uint64_t seed) {
  Rng rng = make_rng(seed, 13);
  const int d = 5;
  const double alpha = 0.5, gamma = 0.7;
  Matrix t;
  LossOutput out;
  double margin = 0.0;
  do {
    t = random_unit_rows(rng, 3, d);
    if ((t.row(2) - t.row(0)).norm() < 0.3 ||
        (t.row(1) - t.row(0)).norm() < 0.3)
      continue;
    out = directed_triplet_loss(t.row(0), t.row(1), t.row(2), alpha, gamma);
    const double base = (t.row(0) - t.row(1)).squaredNorm() -
                        (t.row(0) - t.row(2)).squaredNorm() + alpha;
    const double cosv =
        direction_cos(t.row(0), t.row(1), t.row(2)).value;
    margin = std::abs(base + gamma * cosv);
  } while (margin < 1e-2);

  CheckCase c;
  c.input_names = {"embeddings"};
  c.inputs = {t};
  c.value = [alpha, gamma](const MatrixList& in) {
    return directed_triplet_loss(in[0].row(0), in[0].row(1), in[0].row(2),
                                 alpha, gamma)
        .value;
  };
  c.analytic = {out.grad_embeddings};
  c.kink_distance = margin;
  return c;
}

CheckCase gen_language_combined(std::uint64_t seed) {
  Rng rng = make_rng(seed, 14);
  const int classes = 3, d = 6;
  const double omega = 0.7, gamma_l = 1.0;
  EmbeddingBatch batch{random_unit_rows(rng, 2 * classes, d),
                       paired_labels(classes), false};
  std::vector<int> ids;
  for (int c2 = 0; c2 < classes; ++c2) ids.push_back(c2);
  const LabelEmbeddingTable table = synthetic_label_table(ids, 5, seed + 99);
  const SimilarityMatrix sim = cosine_similarity_matrix(batch, batch);
  const MsMiningMasks masks = ms_mine(sim, batch.labels, 0.1);

  CheckCase c;
  c.input_names = {"embeddings"};
  c.inputs = {batch.data};
  const IntVector labels = batch.labels;
  c.value = [labels, masks, table, omega, gamma_l](const MatrixList& in) {
    const EmbeddingBatch b{in[0], labels, false};
    const LossOutput dml = ms_loss(b, masks, 2.0, 50.0, 0.5);
    const LossOutput lang = language_distill_on_batch(b, table, gamma_l);
    return combine_with_language(dml, lang, omega).value;
  };
  const LossOutput dml = ms_loss(batch, masks, 2.0, 50.0, 0.5);
  const LossOutput lang = language_distill_on_batch(batch, table, gamma_l);
  c.analytic = {combine_with_language(dml, lang, omega).grad_embeddings};
  return c;
}

}  // namespace

LossRegistry default_loss_registry() {
  LossRegistry registry;
  registry.add("contrastive", gen_contrastive);
  registry.add("triplet_euclidean",
               [](std::uint64_t s) { return gen_triplet(s, false); });
  registry.add("triplet_cosine",
               [](std::uint64_t s) { return gen_triplet(s, true); });
  registry.add("npair", gen_npair);
  registry.add("ms", [](std::uint64_t s) { return gen_ms(s, false); });
  registry.add("nca", gen_nca);
  registry.add("proxynca", [](std::uint64_t s) { return gen_proxynca(s, 0); });
  registry.add("proxynca_pp",
               [](std::uint64_t s) { return gen_proxynca(s, 1); });
  registry.add("proxy_anchor", gen_proxy_anchor);
  registry.add("proxygml", gen_proxygml);
  registry.add("directed_triplet", gen_directed_triplet);
  registry.add("directed_ms",
               [](std::uint64_t s) { return gen_ms(s, true); });
  registry.add("directed_proxynca",
               [](std::uint64_t s) { return gen_proxynca(s, 2); });
  registry.add("language_combined", gen_language_combined);
  return registry;
}

}  // namespace metricforge
