#include "metricforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "metricforge/eval.hpp"
#include "metricforge/numerics.hpp"
#include "metricforge/pair_losses.hpp"

namespace metricforge {

int Dataset::num_classes() const {
  int max_label = -1;
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    max_label = std::max(max_label, labels[i]);
  return max_label + 1;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2)
    throw InsufficientClassesError("generate_synthetic: need >= 2 classes");
  if (spec.samples_per_class < 1)
    throw Error("generate_synthetic: need >= 1 sample per class");
  if (spec.ambient_dim < 1) throw Error("generate_synthetic: bad dimension");
  if (spec.class_spread < 0.0)
    throw Error("generate_synthetic: spread must be >= 0");

  Rng rng(spec.seed);
  Matrix centers(spec.num_classes, spec.ambient_dim);
  for (int c = 0; c < spec.num_classes; ++c) {
    Vector v(spec.ambient_dim);
    for (int k = 0; k < spec.ambient_dim; ++k) v[k] = rng.gaussian();
    centers.row(c) = l2_normalize(v);
  }

  const int n = spec.num_classes * spec.samples_per_class;
  Dataset data;
  data.features.resize(n, spec.ambient_dim);
  data.labels.resize(n);
  int row = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
      Vector v = centers.row(c);
      for (int k = 0; k < spec.ambient_dim; ++k)
        v[k] += spec.class_spread * rng.gaussian();
      data.features.row(row) = l2_normalize(v);
      data.labels[row] = c;
    }
  }
  return data;
}

std::vector<int> sample_batch(const Dataset& dataset, Sampler sampler,
                              int batch_size, Rng& rng) {
  const int n = static_cast<int>(dataset.size());
  if (batch_size < 2) throw Error("sample_batch: batch_size must be >= 2");
  if (batch_size > n)
    throw Error("sample_batch: batch_size exceeds dataset size");

  if (sampler == Sampler::kUniform)
    return rng.sample_without_replacement(n, batch_size);

  if (batch_size % 2 != 0)
    throw Error("sample_batch: two_per_class needs an even batch size");
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < n; ++i) by_class[dataset.labels[i]].push_back(i);
  std::vector<int> eligible;
  for (const auto& [label, rows] : by_class)
    if (rows.size() >= 2) eligible.push_back(label);
  const int wanted = batch_size / 2;
  if (static_cast<int>(eligible.size()) < wanted)
    throw InsufficientClassesError(
        "sample_batch: fewer than batch_size/2 classes with >= 2 samples");

  std::vector<int> class_pick =
      rng.sample_without_replacement(static_cast<int>(eligible.size()), wanted);
  std::vector<int> batch;
  batch.reserve(batch_size);
  for (const int pick : class_pick) {
    const auto& rows = by_class[eligible[pick]];
    const auto two =
        rng.sample_without_replacement(static_cast<int>(rows.size()), 2);
    batch.push_back(rows[two[0]]);
    batch.push_back(rows[two[1]]);
  }
  return batch;
}

bool loss_uses_proxies(const std::string& name) {
  return name == "proxynca" || name == "proxynca_pp" || name == "proxy_anchor" ||
         name == "proxygml" || name == "directed_proxynca";
}

bool loss_requires_normalized(const std::string& name) {
  return name == "triplet_cosine" || name == "npair" || name == "ms" ||
         name == "directed_ms" || loss_uses_proxies(name);
}

const std::vector<std::string>& known_loss_names() {
  static const std::vector<std::string> names = {
      "contrastive", "triplet",          "triplet_cosine", "npair",
      "ms",          "nca",              "proxynca",       "proxynca_pp",
      "proxy_anchor", "proxygml",        "directed_triplet",
      "directed_ms", "directed_proxynca"};
  return names;
}

namespace {

// Mean contrastive loss over every pair i < j.
LossOutput batch_contrastive(const EmbeddingBatch& batch, double alpha) {
  const Eigen::Index b = batch.size();
  LossOutput out;
  out.grad_embeddings = Matrix::Zero(b, batch.dim());
  long pairs = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = i + 1; j < b; ++j) {
      const bool same = batch.labels[i] == batch.labels[j];
      const LossOutput one =
          contrastive_loss(batch.data.row(i), batch.data.row(j), same, alpha);
      out.value += one.value;
      out.grad_embeddings.row(i) += one.grad_embeddings.row(0);
      out.grad_embeddings.row(j) += one.grad_embeddings.row(1);
      ++pairs;
    }
  }
  if (pairs > 0) {
    out.value /= pairs;
    out.grad_embeddings /= pairs;
  }
  return out;
}

// Mean over every (anchor, positive, negative) triple in the batch.
LossOutput batch_triplets(const EmbeddingBatch& batch, const LossSpec& spec) {
  const Eigen::Index b = batch.size();
  LossOutput out;
  out.grad_embeddings = Matrix::Zero(b, batch.dim());
  long count = 0;
  for (Eigen::Index a = 0; a < b; ++a) {
    for (Eigen::Index p = 0; p < b; ++p) {
      if (p == a || batch.labels[p] != batch.labels[a]) continue;
      for (Eigen::Index n = 0; n < b; ++n) {
        if (batch.labels[n] == batch.labels[a]) continue;
        LossOutput one;
        if (spec.name == "triplet") {
          one = triplet_loss_euclidean(batch.data.row(a), batch.data.row(p),
                                       batch.data.row(n), spec.alpha);
        } else if (spec.name == "triplet_cosine") {
          one = triplet_loss_cosine(batch.data.row(a), batch.data.row(p),
                                    batch.data.row(n), spec.alpha);
        } else {
          one = directed_triplet_loss(batch.data.row(a), batch.data.row(p),
                                      batch.data.row(n), spec.alpha,
                                      spec.gamma, spec.directed);
        }
        out.value += one.value;
        out.grad_embeddings.row(a) += one.grad_embeddings.row(0);
        out.grad_embeddings.row(p) += one.grad_embeddings.row(1);
        out.grad_embeddings.row(n) += one.grad_embeddings.row(2);
        ++count;
      }
    }
  }
  if (count > 0) {
    out.value /= count;
    out.grad_embeddings /= count;
  }
  return out;
}

}  // namespace

LossOutput batch_loss(const LossSpec& spec, const EmbeddingBatch& batch,
                      const ProxySet* proxies) {
  if (loss_uses_proxies(spec.name) && proxies == nullptr)
    throw Error("batch_loss: loss '" + spec.name + "' needs proxies");

  if (spec.name == "contrastive") return batch_contrastive(batch, spec.alpha);
  if (spec.name == "triplet" || spec.name == "triplet_cosine" ||
      spec.name == "directed_triplet")
    return batch_triplets(batch, spec);
  if (spec.name == "npair") return npair_loss(batch, spec.npair_exponential);
  if (spec.name == "ms" || spec.name == "directed_ms") {
    const SimilarityMatrix sim = cosine_similarity_matrix(batch, batch);
    const MsMiningMasks masks = ms_mine(sim, batch.labels, spec.epsilon);
    if (spec.name == "ms")
      return ms_loss(batch, masks, spec.alpha, spec.beta, spec.lambda);
    return directed_ms_loss(batch, masks, spec.alpha, spec.beta, spec.lambda,
                            spec.gamma, spec.directed);
  }
  if (spec.name == "nca") return nca_loss(batch);
  if (spec.name == "proxynca") return proxynca_loss(batch, *proxies);
  if (spec.name == "proxynca_pp")
    return proxynca_pp_loss(batch, *proxies, spec.temperature);
  if (spec.name == "proxy_anchor")
    return proxy_anchor_loss(batch, *proxies, spec.alpha, spec.delta);
  if (spec.name == "proxygml") {
    ProxyGmlConfig cfg;
    cfg.M = spec.proxies_per_class;
    cfg.K = spec.proxies_kept > 0 ? spec.proxies_kept
                                  : static_cast<int>(proxies->size());
    cfg.lambda = spec.lambda;
    return proxygml_loss(batch, *proxies, cfg);
  }
  if (spec.name == "directed_proxynca")
    return directed_proxynca_loss(batch, *proxies, spec.gamma, spec.directed);
  throw ConfigError("batch_loss: unknown loss '" + spec.name + "'");
}

Matrix encode_linear(const Matrix& w, const Matrix& x, bool normalize) {
  Matrix u = x * w.transpose();  // N x d
  if (!normalize) return u;
  return l2_normalize_rows(u);
}

Matrix encoder_grad(const Matrix& w, const Matrix& x, bool normalize,
                    const Matrix& grad_embeddings) {
  Matrix grad_w = Matrix::Zero(w.rows(), w.cols());
  const Matrix u = x * w.transpose();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Vector g = grad_embeddings.row(i);
    if (normalize) {
      // J = (I - n n^T) / |u| with n = u / |u|.
      const double norm = u.row(i).norm();
      if (norm <= kNormEpsilon)
        throw ZeroVectorError("encoder_grad: zero pre-normalization row");
      const Vector n_hat = u.row(i) / norm;
      g = (g - n_hat * n_hat.dot(g)) / norm;
    }
    grad_w += g * x.row(i);
  }
  return grad_w;
}

namespace {

void validate_config(const Dataset& dataset, const TrainConfig& config) {
  if (config.learning_rate < 0.0)
    throw ConfigError("train: learning_rate must be >= 0");
  if (config.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (config.batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (config.embedding_dim < 1)
    throw ConfigError("train: embedding_dim must be >= 1");
  if (config.batch_size > dataset.size())
    throw ConfigError("train: batch_size exceeds dataset size");

  const auto& names = known_loss_names();
  if (std::find(names.begin(), names.end(), config.loss.name) == names.end())
    throw ConfigError("train: unknown loss '" + config.loss.name + "'");
  if (config.loss.name == "npair" && config.sampler != Sampler::kTwoPerClass)
    throw ConfigError("train: npair requires the two_per_class sampler");
  if (config.sampler == Sampler::kTwoPerClass && config.batch_size % 2 != 0)
    throw ConfigError("train: two_per_class needs an even batch size");
  if (loss_requires_normalized(config.loss.name) && !config.normalize_embeddings)
    throw ConfigError("train: loss '" + config.loss.name +
                      "' needs normalize_embeddings=true");
  if (config.loss.name == "proxygml") {
    const int m = config.loss.proxies_per_class;
    const int k = config.loss.proxies_kept > 0
                      ? config.loss.proxies_kept
                      : m * dataset.num_classes();
    if (m < 1) throw ConfigError("train: proxygml needs M >= 1");
    if (k < m || k > m * dataset.num_classes())
      throw ConfigError("train: proxygml needs M <= K <= M*C");
  }
  if (config.language && config.language->omega < 0.0)
    throw ConfigError("train: omega must be >= 0");
}

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  validate_config(dataset, config);
  const Eigen::Index n = dataset.size();
  const int d = config.embedding_dim;
  const int num_classes = dataset.num_classes();
  const double proxy_lr = config.proxy_learning_rate >= 0.0
                              ? config.proxy_learning_rate
                              : 10.0 * config.learning_rate;

  Rng rng(config.seed);

  TrainResult result;
  if (config.encoder_mode == EncoderMode::kFreeEmbeddings) {
    result.embeddings.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      Vector v(d);
      for (int k = 0; k < d; ++k) v[k] = rng.gaussian();
      result.embeddings.row(i) =
          config.normalize_embeddings ? l2_normalize(v) : Vector(v);
    }
  } else {
    if (d > dataset.dim())
      throw ConfigError("train: embedding_dim exceeds the data dimension");
    result.encoder.resize(d, dataset.dim());
    const double scale = 1.0 / std::sqrt(static_cast<double>(dataset.dim()));
    for (Eigen::Index r = 0; r < result.encoder.rows(); ++r)
      for (Eigen::Index c = 0; c < result.encoder.cols(); ++c)
        result.encoder(r, c) = scale * rng.gaussian();
    result.embeddings = encode_linear(result.encoder, dataset.features,
                                      config.normalize_embeddings);
  }

  const bool with_proxies = loss_uses_proxies(config.loss.name);
  if (with_proxies) {
    ProxySet proxies;
    const int m =
        config.loss.name == "proxygml" ? config.loss.proxies_per_class : 1;
    proxies.proxies_per_class = m;
    proxies.vectors.resize(num_classes * m, d);
    proxies.proxy_class.resize(num_classes * m);
    for (int c = 0; c < num_classes; ++c) {
      for (int j = 0; j < m; ++j) {
        Vector v(d);
        for (int k = 0; k < d; ++k) v[k] = rng.gaussian();
        proxies.vectors.row(c * m + j) = l2_normalize(v);
        proxies.proxy_class[c * m + j] = c;
      }
    }
    proxies.normalized = true;
    result.proxies = std::move(proxies);
  }

  const int steps_per_epoch =
      static_cast<int>((n + config.batch_size - 1) / config.batch_size);
  long global_step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step, ++global_step) {
      const std::vector<int> idx =
          sample_batch(dataset, config.sampler, config.batch_size, rng);

      EmbeddingBatch batch;
      batch.data.resize(idx.size(), d);
      batch.labels.resize(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b) {
        batch.labels[b] = dataset.labels[idx[b]];
        if (config.encoder_mode == EncoderMode::kFreeEmbeddings) {
          batch.data.row(b) = result.embeddings.row(idx[b]);
        } else {
          batch.data.row(b) = encode_linear(
              result.encoder, dataset.features.row(idx[b]),
              config.normalize_embeddings);
        }
      }

      LossOutput loss = batch_loss(
          config.loss, batch,
          result.proxies ? &*result.proxies : nullptr);
      if (config.language && config.language->omega > 0.0) {
        const LossOutput lang = language_distill_on_batch(
            batch, config.language->table, config.language->gamma_l);
        loss = combine_with_language(loss, lang, config.language->omega);
      }
      if (!loss.all_finite())
        throw NonFiniteLossError(
            "train: non-finite loss at step " + std::to_string(global_step),
            global_step);
      loss_sum += loss.value;

      // Plain gradient descent.
      if (config.encoder_mode == EncoderMode::kFreeEmbeddings) {
        for (std::size_t b = 0; b < idx.size(); ++b) {
          result.embeddings.row(idx[b]) -=
              config.learning_rate * loss.grad_embeddings.row(b);
          if (config.normalize_embeddings)
            result.embeddings.row(idx[b]) =
                l2_normalize(result.embeddings.row(idx[b]));
        }
      } else {
        Matrix x(idx.size(), dataset.dim());
        for (std::size_t b = 0; b < idx.size(); ++b)
          x.row(b) = dataset.features.row(idx[b]);
        const Matrix grad_w =
            encoder_grad(result.encoder, x, config.normalize_embeddings,
                         loss.grad_embeddings);
        result.encoder -= config.learning_rate * grad_w;
      }
      if (result.proxies && loss.grad_proxies) {
        result.proxies->vectors -= proxy_lr * *loss.grad_proxies;
        if (config.normalize_embeddings)
          result.proxies->vectors = l2_normalize_rows(result.proxies->vectors);
        result.proxies->normalized = config.normalize_embeddings;
      }
    }

    if (config.encoder_mode == EncoderMode::kLinear)
      result.embeddings = encode_linear(result.encoder, dataset.features,
                                        config.normalize_embeddings);

    EmbeddingBatch full;
    full.data = result.embeddings;
    full.labels = dataset.labels;
    EpochRecord record;
    record.epoch = epoch;
    record.mean_loss = loss_sum / steps_per_epoch;
    record.recall_at_1 = recall_at_k(full, {1}).at(1);
    const auto [intra, inter] = separation_stats(full);
    record.intra_inter_gap = intra - inter;
    result.history.push_back(record);
  }
  return result;
}

}  // namespace metricforge
