#include "metricforge/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "metricforge/io.hpp"

namespace metricforge {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& section,
                  const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + it.key() + "' in " + section);
  }
}

template <typename T>
void maybe_get(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "'");
  }
}

template <typename T>
void maybe_get_opt(const json& obj, const char* key, std::optional<T>& out) {
  if (!obj.contains(key)) return;
  T v;
  maybe_get(obj, key, v);
  out = v;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");

  require_keys(j, "top level",
               {"schema", "seed", "output_dir", "data", "loss", "train",
                "eval", "language"});

  RunConfig c;
  maybe_get(j, "schema", c.schema);
  if (c.schema != 1)
    throw ConfigError("config: unsupported schema " + std::to_string(c.schema));
  maybe_get_opt(j, "seed", c.seed);
  maybe_get(j, "output_dir", c.output_dir);

  if (j.contains("data")) {
    const json& d = j.at("data");
    require_keys(d, "data", {"path", "classes", "per_class", "dim", "spread"});
    maybe_get(d, "path", c.data_path);
    maybe_get(d, "classes", c.classes);
    maybe_get(d, "per_class", c.per_class);
    maybe_get(d, "dim", c.data_dim);
    maybe_get(d, "spread", c.spread);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    require_keys(l, "loss",
                 {"name", "alpha", "beta", "lambda", "epsilon", "gamma",
                  "delta", "temperature", "M", "K", "npair_exponential",
                  "direction_term", "hinge"});
    maybe_get(l, "name", c.loss_name);
    maybe_get_opt(l, "alpha", c.alpha);
    maybe_get_opt(l, "beta", c.beta);
    maybe_get_opt(l, "lambda", c.lambda);
    maybe_get_opt(l, "epsilon", c.epsilon);
    maybe_get_opt(l, "gamma", c.gamma);
    maybe_get_opt(l, "delta", c.delta);
    maybe_get_opt(l, "temperature", c.temperature);
    maybe_get(l, "M", c.proxies_per_class);
    maybe_get(l, "K", c.proxies_kept);
    maybe_get(l, "npair_exponential", c.npair_exponential);
    maybe_get(l, "direction_term", c.direction_term);
    maybe_get(l, "hinge", c.hinge);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    require_keys(t, "train",
                 {"learning_rate", "proxy_learning_rate", "epochs",
                  "batch_size", "encoder_mode", "normalize_embeddings",
                  "sampler", "embedding_dim"});
    maybe_get_opt(t, "learning_rate", c.learning_rate);
    maybe_get_opt(t, "proxy_learning_rate", c.proxy_learning_rate);
    maybe_get(t, "epochs", c.epochs);
    maybe_get(t, "batch_size", c.batch_size);
    maybe_get(t, "encoder_mode", c.encoder_mode);
    maybe_get(t, "normalize_embeddings", c.normalize_embeddings);
    maybe_get(t, "sampler", c.sampler);
    maybe_get(t, "embedding_dim", c.embedding_dim);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    require_keys(e, "eval", {"ks"});
    maybe_get(e, "ks", c.ks);
  }
  if (j.contains("language")) {
    const json& l = j.at("language");
    require_keys(l, "language", {"path", "omega", "gamma_l", "dim"});
    maybe_get(l, "path", c.language_path);
    maybe_get(l, "omega", c.omega);
    maybe_get(l, "gamma_l", c.gamma_l);
    maybe_get(l, "dim", c.language_dim);
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

void resolve_defaults(RunConfig& c) {
  const auto& names = known_loss_names();
  if (std::find(names.begin(), names.end(), c.loss_name) == names.end())
    throw ConfigError("config: unknown loss '" + c.loss_name + "'");

  if (!c.alpha) {
    if (c.loss_name == "contrastive") c.alpha = 1.0;
    else if (c.loss_name == "ms" || c.loss_name == "directed_ms") c.alpha = 2.0;
    else if (c.loss_name == "proxy_anchor") c.alpha = 32.0;
    else c.alpha = 0.2;
  }
  if (!c.beta) c.beta = 50.0;
  if (!c.lambda) c.lambda = c.loss_name == "proxygml" ? 0.3 : 0.5;
  if (!c.epsilon) c.epsilon = 0.1;
  if (!c.gamma)
    c.gamma = c.loss_name.rfind("directed_", 0) == 0 ? 1.0 : 0.0;
  if (!c.delta) c.delta = 0.1;
  if (!c.temperature) c.temperature = 0.5;
  if (!c.learning_rate) c.learning_rate = 0.1;
  if (!c.proxy_learning_rate) c.proxy_learning_rate = 10.0 * *c.learning_rate;
  if (!c.seed) c.seed = 0;

  if (c.direction_term != "penalty" && c.direction_term != "discount")
    throw ConfigError("config: direction_term must be penalty or discount");
  if (c.encoder_mode != "free_embeddings" && c.encoder_mode != "linear")
    throw ConfigError("config: encoder_mode must be free_embeddings or linear");
  if (c.sampler != "uniform" && c.sampler != "two_per_class")
    throw ConfigError("config: sampler must be uniform or two_per_class");
  if (c.ks.empty()) throw ConfigError("config: eval.ks must be non-empty");
  for (const int k : c.ks)
    if (k < 1) throw ConfigError("config: eval.ks entries must be >= 1");
  if (c.omega < 0.0) throw ConfigError("config: omega must be >= 0");
  if (c.data_path.empty() && c.classes < 2)
    throw ConfigError("config: synthetic data needs classes >= 2");
}

std::string dump_run_config(const RunConfig& c) {
  RunConfig r = c;
  resolve_defaults(r);
  json j;
  j["schema"] = r.schema;
  j["seed"] = *r.seed;
  j["output_dir"] = r.output_dir;
  j["data"] = {{"path", r.data_path},
               {"classes", r.classes},
               {"per_class", r.per_class},
               {"dim", r.data_dim},
               {"spread", r.spread}};
  j["loss"] = {{"name", r.loss_name},
               {"alpha", *r.alpha},
               {"beta", *r.beta},
               {"lambda", *r.lambda},
               {"epsilon", *r.epsilon},
               {"gamma", *r.gamma},
               {"delta", *r.delta},
               {"temperature", *r.temperature},
               {"M", r.proxies_per_class},
               {"K", r.proxies_kept},
               {"npair_exponential", r.npair_exponential},
               {"direction_term", r.direction_term},
               {"hinge", r.hinge}};
  j["train"] = {{"learning_rate", *r.learning_rate},
                {"proxy_learning_rate", *r.proxy_learning_rate},
                {"epochs", r.epochs},
                {"batch_size", r.batch_size},
                {"encoder_mode", r.encoder_mode},
                {"normalize_embeddings", r.normalize_embeddings},
                {"sampler", r.sampler},
                {"embedding_dim", r.embedding_dim}};
  j["eval"] = {{"ks", r.ks}};
  j["language"] = {{"path", r.language_path},
                   {"omega", r.omega},
                   {"gamma_l", r.gamma_l},
                   {"dim", r.language_dim}};
  return j.dump(2) + "\n";
}

TrainConfig to_train_config(const RunConfig& config,
                            const std::vector<int>& class_ids) {
  RunConfig r = config;
  resolve_defaults(r);

  TrainConfig t;
  t.loss.name = r.loss_name;
  t.loss.alpha = *r.alpha;
  t.loss.beta = *r.beta;
  t.loss.lambda = *r.lambda;
  t.loss.epsilon = *r.epsilon;
  t.loss.gamma = *r.gamma;
  t.loss.delta = *r.delta;
  t.loss.temperature = *r.temperature;
  t.loss.proxies_per_class = r.proxies_per_class;
  t.loss.proxies_kept = r.proxies_kept;
  t.loss.npair_exponential = r.npair_exponential;
  t.loss.directed.term = r.direction_term == "penalty"
                             ? DirectionTerm::kPenalty
                             : DirectionTerm::kDiscount;
  t.loss.directed.hinge = r.hinge;
  t.learning_rate = *r.learning_rate;
  t.proxy_learning_rate = *r.proxy_learning_rate;
  t.epochs = r.epochs;
  t.batch_size = r.batch_size;
  t.seed = *r.seed;
  t.encoder_mode = r.encoder_mode == "linear" ? EncoderMode::kLinear
                                              : EncoderMode::kFreeEmbeddings;
  t.normalize_embeddings = r.normalize_embeddings;
  t.sampler =
      r.sampler == "uniform" ? Sampler::kUniform : Sampler::kTwoPerClass;
  t.embedding_dim = r.embedding_dim;

  if (r.omega > 0.0) {
    LanguageConfig lang;
    lang.omega = r.omega;
    lang.gamma_l = r.gamma_l;
    if (!r.language_path.empty()) {
      lang.table = read_label_table_csv(r.language_path);
    } else {
      lang.table =
          synthetic_label_table(class_ids, r.language_dim, *r.seed + 1);
    }
    t.language = std::move(lang);
  }
  return t;
}

}  // namespace metricforge
