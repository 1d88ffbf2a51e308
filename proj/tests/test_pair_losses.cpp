#include <doctest.h>

#include <cmath>
#include <vector>

#include "metricforge/gradcheck.hpp"
#include "metricforge/numerics.hpp"
#include "metricforge/pair_losses.hpp"
#include "metricforge/rng.hpp"
#include "test_util.hpp"

using namespace metricforge;
using testutil::max_rel_error;
using testutil::random_unit;
using testutil::random_unit_rows;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

IntVector labels_of(std::initializer_list<int> values) {
  IntVector labels(static_cast<Eigen::Index>(values.size()));
  Eigen::Index k = 0;
  for (const int v : values) labels[k++] = v;
  return labels;
}

// Reference mining: the two filtering inequalities applied by a plain double
// loop, kept independent of ms_mine.
MsMiningMasks brute_force_mine(const Matrix& s, const IntVector& labels,
                               double epsilon) {
  const Eigen::Index b = s.rows();
  MsMiningMasks masks;
  masks.epsilon = epsilon;
  masks.positive_mask = BoolMatrix::Constant(b, b, false);
  masks.negative_mask = BoolMatrix::Constant(b, b, false);
  for (Eigen::Index i = 0; i < b; ++i) {
    bool has_pos = false, has_neg = false;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == i) continue;
      (labels[j] == labels[i] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == i) continue;
      if (labels[j] != labels[i]) {
        // negative j kept iff S_in > min_p S_ip - epsilon
        double min_pos = std::numeric_limits<double>::infinity();
        for (Eigen::Index p = 0; p < b; ++p)
          if (p != i && labels[p] == labels[i])
            min_pos = std::min(min_pos, s(i, p));
        if (s(i, j) > min_pos - epsilon) masks.negative_mask(i, j) = true;
      } else {
        // positive j kept iff S_ip < max_n S_in + epsilon
        double max_neg = -std::numeric_limits<double>::infinity();
        for (Eigen::Index n = 0; n < b; ++n)
          if (n != i && labels[n] != labels[i])
            max_neg = std::max(max_neg, s(i, n));
        if (s(i, j) < max_neg + epsilon) masks.positive_mask(i, j) = true;
      }
    }
  }
  return masks;
}

}  // namespace

TEST_CASE("contrastive_loss examples") {
  const LossOutput zero = contrastive_loss(vec2(1, 0), vec2(1, 0), true, 0.5);
  CHECK(zero.value == 0.0);

  const LossOutput neg = contrastive_loss(vec2(1, 0), vec2(0, 1), false, 1.0);
  CHECK(neg.value == 0.0);  // max(1 - 2, 0)
  CHECK(neg.grad_embeddings.cwiseAbs().maxCoeff() == 0.0);

  const LossOutput close = contrastive_loss(vec2(1, 0), vec2(0.9, 0.1), false, 1.0);
  CHECK(close.value == doctest::Approx(0.98).epsilon(1e-12));

  Vector three(3);
  three << 1, 2, 3;
  CHECK_THROWS_AS(contrastive_loss(vec2(1, 0), three, true, 1.0),
                  DimensionMismatchError);
}

TEST_CASE("contrastive_loss gradients match finite differences") {
  Rng rng(31);
  for (const bool same : {true, false}) {
    for (int trial = 0; trial < 20; ++trial) {
      Vector f_i(4), f_j(4);
      for (int k = 0; k < 4; ++k) {
        f_i[k] = rng.gaussian();
        f_j[k] = rng.gaussian();
      }
      const double alpha = 4.0;
      if (!same && std::abs(alpha - (f_i - f_j).squaredNorm()) < 1e-2) continue;
      Matrix stacked(2, 4);
      stacked.row(0) = f_i;
      stacked.row(1) = f_j;
      const auto numeric = finite_diff(
          [&](const MatrixList& in) {
            return contrastive_loss(in[0].row(0), in[0].row(1), same, alpha)
                .value;
          },
          {stacked});
      const LossOutput out = contrastive_loss(f_i, f_j, same, alpha);
      CHECK(max_rel_error(out.grad_embeddings, numeric[0]) <= 1e-6);
    }
  }
}

TEST_CASE("triplet_loss_euclidean examples and closed-form gradients") {
  // Satisfied margin: 0 - 2 + 0.2 < 0.
  const LossOutput inactive =
      triplet_loss_euclidean(vec2(1, 0), vec2(1, 0), vec2(0, 1), 0.2);
  CHECK(inactive.value == 0.0);
  CHECK(inactive.grad_embeddings.cwiseAbs().maxCoeff() == 0.0);

  const LossOutput active =
      triplet_loss_euclidean(vec2(1, 0), vec2(0, 1), vec2(1, 0), 0.2);
  CHECK(active.value == doctest::Approx(2.2).epsilon(1e-12));
  CHECK(active.grad_embeddings(0, 0) == doctest::Approx(2.0));
  CHECK(active.grad_embeddings(0, 1) == doctest::Approx(-2.0));

  // Closed forms hold exactly for active triplets.
  Rng rng(37);
  int checked = 0;
  while (checked < 100) {
    const Vector a = random_unit(rng, 5);
    const Vector p = random_unit(rng, 5);
    const Vector n = random_unit(rng, 5);
    const double hinge =
        (a - p).squaredNorm() - (a - n).squaredNorm() + 0.5;
    if (hinge <= 1e-3) continue;
    ++checked;
    const LossOutput out = triplet_loss_euclidean(a, p, n, 0.5);
    CHECK((out.grad_embeddings.row(0).transpose() - 2.0 * (n - p))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
    CHECK((out.grad_embeddings.row(1).transpose() - 2.0 * (p - a))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
    CHECK((out.grad_embeddings.row(2).transpose() - 2.0 * (a - n))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
  }
}

TEST_CASE("triplet losses match finite differences away from the kink") {
  Rng rng(41);
  int done = 0;
  while (done < 30) {
    Matrix t = random_unit_rows(rng, 3, 5);
    const double alpha = 0.5;
    const double hinge = (t.row(0) - t.row(1)).squaredNorm() -
                         (t.row(0) - t.row(2)).squaredNorm() + alpha;
    if (std::abs(hinge) < 1e-2) continue;
    ++done;
    const auto numeric = finite_diff(
        [&](const MatrixList& in) {
          return triplet_loss_euclidean(in[0].row(0), in[0].row(1),
                                        in[0].row(2), alpha)
              .value;
        },
        {t});
    const LossOutput out =
        triplet_loss_euclidean(t.row(0), t.row(1), t.row(2), alpha);
    CHECK(max_rel_error(out.grad_embeddings, numeric[0]) <= 1e-6);
  }
}

TEST_CASE("triplet_loss_cosine examples") {
  const LossOutput inactive =
      triplet_loss_cosine(vec2(1, 0), vec2(1, 0), vec2(0, 1), 0.1);
  CHECK(inactive.value == 0.0);

  const LossOutput active =
      triplet_loss_cosine(vec2(1, 0), vec2(0, 1), vec2(1, 0), 0.1);
  CHECK(active.value == doctest::Approx(1.1).epsilon(1e-12));

  CHECK_THROWS_AS(triplet_loss_cosine(vec2(2, 0), vec2(0, 1), vec2(1, 0), 0.1),
                  NotNormalizedError);

  Rng rng(43);
  int done = 0;
  while (done < 30) {
    const Matrix t = random_unit_rows(rng, 3, 5);
    const double alpha = 0.3;
    const double hinge =
        t.row(0).dot(t.row(2)) - t.row(0).dot(t.row(1)) + alpha;
    if (std::abs(hinge) < 1e-2) continue;
    ++done;
    const auto numeric = finite_diff(
        [&](const MatrixList& in) {
          return triplet_loss_cosine(in[0].row(0), in[0].row(1), in[0].row(2),
                                     alpha)
              .value;
        },
        {t});
    const LossOutput out =
        triplet_loss_cosine(t.row(0), t.row(1), t.row(2), alpha);
    CHECK(max_rel_error(out.grad_embeddings, numeric[0]) <= 1e-6);
  }
}

TEST_CASE("npair_loss degenerate geometry examples") {
  // All four embeddings identical: every cross dot equals the own dot.
  EmbeddingBatch equal;
  equal.data.resize(4, 3);
  for (int i = 0; i < 4; ++i) equal.data.row(i) << 1, 0, 0;
  equal.labels = labels_of({0, 0, 1, 1});
  CHECK(npair_loss(equal).value ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));

  // Anchors equal their positives, the two classes anti-aligned.
  EmbeddingBatch anti;
  anti.data.resize(4, 3);
  anti.data.row(0) << 1, 0, 0;
  anti.data.row(1) << 1, 0, 0;
  anti.data.row(2) << -1, 0, 0;
  anti.data.row(3) << -1, 0, 0;
  anti.labels = labels_of({0, 0, 1, 1});
  CHECK(npair_loss(anti).value ==
        doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-9));

  EmbeddingBatch bad;
  bad.data.resize(3, 3);
  bad.data.setZero();
  bad.data.col(0).setOnes();
  bad.labels = labels_of({0, 0, 0});
  CHECK_THROWS_AS(npair_loss(bad), BadBatchStructureError);
}

TEST_CASE("npair_loss per-anchor value reduces to log(1+exp(s_an - s_ap))") {
  Rng rng(47);
  for (int trial = 0; trial < 20; ++trial) {
    EmbeddingBatch batch;
    batch.data = random_unit_rows(rng, 4, 6);
    batch.labels = labels_of({0, 0, 1, 1});
    const Matrix& f = batch.data;
    // With C = 2 each anchor sees exactly one negative: the other positive.
    const double term0 =
        std::log(1.0 + std::exp(f.row(0).dot(f.row(3)) - f.row(0).dot(f.row(1))));
    const double term1 =
        std::log(1.0 + std::exp(f.row(2).dot(f.row(1)) - f.row(2).dot(f.row(3))));
    CHECK(npair_loss(batch).value ==
          doctest::Approx(0.5 * (term0 + term1)).epsilon(1e-9));
  }
}

TEST_CASE("npair_loss gradients match finite differences") {
  Rng rng(53);
  EmbeddingBatch batch;
  batch.data = random_unit_rows(rng, 8, 6);
  batch.labels = labels_of({0, 0, 1, 1, 2, 2, 3, 3});
  const IntVector labels = batch.labels;
  const auto numeric = finite_diff(
      [&](const MatrixList& in) {
        return npair_loss(EmbeddingBatch{in[0], labels, false}).value;
      },
      {batch.data});
  const LossOutput out = npair_loss(batch);
  CHECK(max_rel_error(out.grad_embeddings, numeric[0]) <= 1e-6);
}

TEST_CASE("npair_loss literal variant evaluates the printed sum") {
  EmbeddingBatch batch;
  batch.data.resize(4, 3);
  batch.data.row(0) << 1, 0, 0;
  batch.data.row(1) << 1, 0, 0;
  batch.data.row(2) << 0, 1, 0;
  batch.data.row(3) << 0, 1, 0;
  batch.labels = labels_of({0, 0, 1, 1});
  // Anchor 1: inner = 1 + (0 - 1) = 0 -> log undefined; shrink separation.
  batch.data.row(2) << 0.6, 0.8, 0;
  batch.data.row(3) << 0.6, 0.8, 0;
  const double inner0 = 1.0 + (0.6 - 1.0);
  const double inner1 = 1.0 + (0.6 - 1.0);
  const LossOutput out = npair_loss(batch, /*exponential_form=*/false);
  CHECK(out.value == doctest::Approx(0.5 * (std::log(inner0) + std::log(inner1)))
                         .epsilon(1e-12));

  // Anti-aligned classes drive the printed sum's log argument negative.
  EmbeddingBatch anti;
  anti.data.resize(4, 3);
  anti.data.row(0) << 1, 0, 0;
  anti.data.row(1) << 1, 0, 0;
  anti.data.row(2) << -1, 0, 0;
  anti.data.row(3) << -1, 0, 0;
  anti.labels = labels_of({0, 0, 1, 1});
  CHECK_THROWS_AS(npair_loss(anti, false), NonFiniteLossError);
}

TEST_CASE("ms_mine matches the filtering inequalities on the worked example") {
  Matrix s(3, 3);
  s << 1.0, 0.9, 0.2,
       0.9, 1.0, 0.4,
       0.2, 0.4, 1.0;
  const SimilarityMatrix sim{s, Metric::kCosine, IndexKind::kSample,
                             IndexKind::kSample};
  const IntVector labels = labels_of({0, 0, 1});
  const MsMiningMasks masks = ms_mine(sim, labels, 0.1);
  CHECK_FALSE(masks.negative_mask(0, 2));  // 0.2 < 0.9 - 0.1
  CHECK_FALSE(masks.positive_mask(0, 1));  // 0.9 >= 0.2 + 0.1
}

TEST_CASE("ms_mine selects both sides when a negative beats the easiest positive") {
  Matrix s = Matrix::Identity(4, 4);
  s(0, 1) = s(1, 0) = 0.5;   // positive pair
  s(0, 2) = s(2, 0) = 0.7;   // hard negative: more similar than the positive
  s(0, 3) = s(3, 0) = 0.1;
  s(1, 2) = s(2, 1) = 0.0;
  s(1, 3) = s(3, 1) = 0.0;
  s(2, 3) = s(3, 2) = 0.6;
  const SimilarityMatrix sim{s, Metric::kCosine, IndexKind::kSample,
                             IndexKind::kSample};
  const IntVector labels = labels_of({0, 0, 1, 1});
  const MsMiningMasks masks = ms_mine(sim, labels, 0.1);
  CHECK(masks.negative_mask(0, 2));   // 0.7 > 0.5 - 0.1
  CHECK(masks.positive_mask(0, 1));   // 0.5 < 0.7 + 0.1
  CHECK_FALSE(masks.negative_mask(0, 3));
}

TEST_CASE("ms_mine equals the brute-force double loop on random batches") {
  Rng rng(59);
  for (int trial = 0; trial < 50; ++trial) {
    const int classes = 2 + static_cast<int>(rng.bounded(3));
    EmbeddingBatch batch;
    batch.data = random_unit_rows(rng, 2 * classes, 5);
    IntVector labels(2 * classes);
    for (int c = 0; c < classes; ++c) {
      labels[2 * c] = c;
      labels[2 * c + 1] = c;
    }
    batch.labels = labels;
    const double epsilon = trial % 5 == 0 ? 0.0 : 0.1;
    const SimilarityMatrix sim = cosine_similarity_matrix(batch, batch);
    const MsMiningMasks fast = ms_mine(sim, labels, epsilon);
    const MsMiningMasks slow = brute_force_mine(sim.values, labels, epsilon);
    CHECK((fast.positive_mask == slow.positive_mask).all());
    CHECK((fast.negative_mask == slow.negative_mask).all());
  }
}

TEST_CASE("ms_loss single mined positive at the margin gives half log 2") {
  // Two samples at similarity exactly lambda, each the other's only mined
  // positive, no mined negatives.
  EmbeddingBatch batch;
  batch.data.resize(2, 2);
  batch.data.row(0) << 1.0, 0.0;
  batch.data.row(1) << 0.5, std::sqrt(3.0) / 2.0;
  batch.labels = labels_of({0, 0});
  MsMiningMasks masks;
  masks.positive_mask = BoolMatrix::Constant(2, 2, false);
  masks.negative_mask = BoolMatrix::Constant(2, 2, false);
  masks.positive_mask(0, 1) = true;
  masks.positive_mask(1, 0) = true;
  const LossOutput out = ms_loss(batch, masks, 2.0, 50.0, 0.5);
  CHECK(out.value == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("ms_loss with no mined pairs is zero with zero gradients") {
  Rng rng(61);
  EmbeddingBatch batch;
  batch.data = random_unit_rows(rng, 4, 5);
  batch.labels = labels_of({0, 0, 1, 1});
  MsMiningMasks masks;
  masks.positive_mask = BoolMatrix::Constant(4, 4, false);
  masks.negative_mask = BoolMatrix::Constant(4, 4, false);
  const LossOutput out = ms_loss(batch, masks, 2.0, 50.0, 0.5);
  CHECK(out.value == 0.0);
  CHECK(out.grad_embeddings.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ms_loss gradients match finite differences with frozen masks") {
  Rng rng(67);
  EmbeddingBatch batch;
  batch.data = random_unit_rows(rng, 8, 6);
  batch.labels = labels_of({0, 0, 1, 1, 2, 2, 3, 3});
  const SimilarityMatrix sim = cosine_similarity_matrix(batch, batch);
  const MsMiningMasks masks = ms_mine(sim, batch.labels, 0.1);
  const IntVector labels = batch.labels;
  const auto numeric = finite_diff(
      [&](const MatrixList& in) {
        return ms_loss(EmbeddingBatch{in[0], labels, false}, masks, 2.0, 50.0,
                       0.5)
            .value;
      },
      {batch.data});
  const LossOutput out = ms_loss(batch, masks, 2.0, 50.0, 0.5);
  CHECK(max_rel_error(out.grad_embeddings, numeric[0]) <= 1e-5);
}

TEST_CASE("permuting batch rows permutes gradients and keeps values") {
  Rng rng(71);
  EmbeddingBatch batch;
  batch.data = random_unit_rows(rng, 8, 5);
  batch.labels = labels_of({0, 0, 1, 1, 2, 2, 3, 3});

  std::vector<int> perm = {5, 2, 7, 0, 3, 6, 1, 4};
  EmbeddingBatch shuffled;
  shuffled.data.resize(8, 5);
  shuffled.labels.resize(8);
  for (int i = 0; i < 8; ++i) {
    shuffled.data.row(i) = batch.data.row(perm[i]);
    shuffled.labels[i] = batch.labels[perm[i]];
  }

  const SimilarityMatrix sim = cosine_similarity_matrix(batch, batch);
  const MsMiningMasks masks = ms_mine(sim, batch.labels, 0.1);
  const SimilarityMatrix sim_p = cosine_similarity_matrix(shuffled, shuffled);
  const MsMiningMasks masks_p = ms_mine(sim_p, shuffled.labels, 0.1);

  const LossOutput a = ms_loss(batch, masks, 2.0, 50.0, 0.5);
  const LossOutput b = ms_loss(shuffled, masks_p, 2.0, 50.0, 0.5);
  CHECK(a.value == doctest::Approx(b.value).epsilon(1e-9));
  for (int i = 0; i < 8; ++i)
    CHECK((a.grad_embeddings.row(perm[i]) - b.grad_embeddings.row(i))
              .cwiseAbs()
              .maxCoeff() <= 1e-9);
}
