#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metricforge/trainer.hpp"

namespace metricforge {

// Full description of one CLI run. Optional fields fall back to per-loss
// defaults when resolve_defaults runs; dump_run_config always prints the
// resolved value of every field.
struct RunConfig {
  int schema = 1;
  std::optional<std::uint64_t> seed;
  std::string output_dir = "out";

  // data: a dataset CSV path, or the synthetic generator when path is empty.
  std::string data_path;
  int classes = 8;
  int per_class = 50;
  int data_dim = 32;
  double spread = 0.15;

  // loss
  std::string loss_name = "triplet";
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> lambda;
  std::optional<double> epsilon;
  std::optional<double> gamma;
  std::optional<double> delta;
  std::optional<double> temperature;
  int proxies_per_class = 1;  // M
  int proxies_kept = 0;       // K; 0 = all proxies (M*C)
  bool npair_exponential = true;
  std::string direction_term = "penalty";  // or "discount"
  bool hinge = true;

  // train
  std::optional<double> learning_rate;
  std::optional<double> proxy_learning_rate;
  int epochs = 100;
  int batch_size = 16;
  std::string encoder_mode = "free_embeddings";  // or "linear"
  bool normalize_embeddings = true;
  std::string sampler = "two_per_class";  // or "uniform"
  int embedding_dim = 16;

  // eval
  std::vector<int> ks = {1, 2, 4, 8};

  // language guidance
  std::string language_path;
  double omega = 0.0;
  double gamma_l = 1.0;
  int language_dim = 16;
};

// Strict JSON parsing: unknown keys and wrong types are ConfigErrors.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Fills every unset optional with its per-loss default and validates the
// cross-field rules that do not need the dataset.
void resolve_defaults(RunConfig& config);

// JSON with every field explicit; parse(dump(c)) == c for resolved configs.
std::string dump_run_config(const RunConfig& config);

// Converts to the trainer-facing config. The language table is built from
// language_path (or synthetically for the given class ids when the path is
// empty) whenever omega > 0.
TrainConfig to_train_config(const RunConfig& config,
                            const std::vector<int>& class_ids);

}  // namespace metricforge
