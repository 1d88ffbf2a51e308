#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metricforge/proxy_losses.hpp"
#include "metricforge/regularizers.hpp"
#include "metricforge/rng.hpp"
#include "metricforge/types.hpp"

namespace metricforge {

struct Dataset {
  Matrix features;  // N x D
  IntVector labels;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  int num_classes() const;
};

struct SyntheticSpec {
  int num_classes = 8;
  int samples_per_class = 50;
  int ambient_dim = 32;
  double class_spread = 0.15;
  std::uint64_t seed = 0;
};

// Seeded class centers on the unit sphere; each sample is
// normalize(center + gaussian * spread).
Dataset generate_synthetic(const SyntheticSpec& spec);

enum class EncoderMode { kFreeEmbeddings, kLinear };
enum class Sampler { kUniform, kTwoPerClass };

// One batch of dataset indices. uniform: a without-replacement draw.
// two_per_class: batch_size/2 distinct classes, two distinct samples each.
std::vector<int> sample_batch(const Dataset& dataset, Sampler sampler,
                              int batch_size, Rng& rng);

// Loss selector plus every hyperparameter any loss consumes.
struct LossSpec {
  std::string name = "triplet";
  double alpha = 0.2;
  double beta = 50.0;
  double lambda = 0.5;
  double epsilon = 0.1;
  double gamma = 0.0;
  double delta = 0.1;
  double temperature = 0.5;
  int proxies_per_class = 1;  // M
  int proxies_kept = 0;       // K; 0 = all proxies
  DirectedOptions directed;
  bool npair_exponential = true;
};

bool loss_uses_proxies(const std::string& name);
bool loss_requires_normalized(const std::string& name);
const std::vector<std::string>& known_loss_names();

struct LanguageConfig {
  double omega = 0.0;
  double gamma_l = 1.0;
  LabelEmbeddingTable table;
};

struct TrainConfig {
  LossSpec loss;
  double learning_rate = 0.1;
  double proxy_learning_rate = -1.0;  // < 0: defaults to 10x learning_rate
  int epochs = 100;
  int batch_size = 16;
  std::uint64_t seed = 0;
  EncoderMode encoder_mode = EncoderMode::kFreeEmbeddings;
  bool normalize_embeddings = true;
  Sampler sampler = Sampler::kTwoPerClass;
  int embedding_dim = 16;

  std::optional<LanguageConfig> language;
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double recall_at_1 = 0.0;
  double intra_inter_gap = 0.0;
};

struct TrainResult {
  Matrix embeddings;  // N x d, final embedding of every dataset row
  std::optional<ProxySet> proxies;
  Matrix encoder;  // d x D, linear mode only
  std::vector<EpochRecord> history;
};

// Deterministic plain gradient-descent loop. Throws NonFiniteLossError (with
// the global step index) if a loss or gradient turns NaN/Inf.
TrainResult train(const Dataset& dataset, const TrainConfig& config);

// Linear encoder forward/backward, exposed for testing. Rows of x are
// samples; the encoder maps R^D -> R^d via W (d x D). With normalize=true
// each encoded row is projected to the unit sphere and the backward pass
// applies the normalization Jacobian.
Matrix encode_linear(const Matrix& w, const Matrix& x, bool normalize);
Matrix encoder_grad(const Matrix& w, const Matrix& x, bool normalize,
                    const Matrix& grad_embeddings);

// Batch-level loss evaluation used by the training loop (mean over pairs /
// triplets for the pointwise losses). Exposed for tests.
LossOutput batch_loss(const LossSpec& spec, const EmbeddingBatch& batch,
                      const ProxySet* proxies);

}  // namespace metricforge
