#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "metricforge/config.hpp"
#include "metricforge/eval.hpp"
#include "metricforge/gradcheck.hpp"
#include "metricforge/io.hpp"
#include "metricforge/trainer.hpp"

namespace mf = metricforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitGradcheck = 4;

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("METRIC_FORGE_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (end == raw || *end != '\0') return std::nullopt;
  return static_cast<std::uint64_t>(v);
}

struct GenDataArgs {
  int classes = 8;
  int per_class = 50;
  int dim = 32;
  double spread = 0.15;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out = "dataset.csv";
};

int run_gen_data(const GenDataArgs& args) {
  mf::SyntheticSpec spec;
  spec.num_classes = args.classes;
  spec.samples_per_class = args.per_class;
  spec.ambient_dim = args.dim;
  spec.class_spread = args.spread;
  spec.seed = args.seed_given ? args.seed : env_seed().value_or(0);
  const mf::Dataset data = mf::generate_synthetic(spec);
  mf::write_dataset_csv(args.out, data);
  std::cout << "wrote " << args.out << ": N=" << data.size()
            << " C=" << data.num_classes() << " D=" << data.dim() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config_path;
  bool dump = false;
  // overrides; the *_set flags record whether the user passed each one
  std::string data_path, out_dir, loss, sampler, encoder, language_path;
  std::uint64_t seed = 0;
  int epochs = 0, batch_size = 0, dim = 0, m = 0, k = 0;
  double lr = 0, plr = 0, alpha = 0, beta = 0, lambda = 0, epsilon = 0,
         gamma = 0, delta = 0, temperature = 0, omega = 0;
  bool no_normalize = false;
};

int run_train(const CLI::App& cmd, const TrainArgs& args) {
  mf::RunConfig config;
  if (!args.config_path.empty()) config = mf::load_run_config(args.config_path);

  auto given = [&](const char* flag) { return cmd.count(flag) > 0; };
  if (given("--data")) config.data_path = args.data_path;
  if (given("--out")) config.output_dir = args.out_dir;
  if (given("--loss")) config.loss_name = args.loss;
  if (given("--seed")) config.seed = args.seed;
  if (given("--epochs")) config.epochs = args.epochs;
  if (given("--batch-size")) config.batch_size = args.batch_size;
  if (given("--embedding-dim")) config.embedding_dim = args.dim;
  if (given("--lr")) config.learning_rate = args.lr;
  if (given("--proxy-lr")) config.proxy_learning_rate = args.plr;
  if (given("--alpha")) config.alpha = args.alpha;
  if (given("--beta")) config.beta = args.beta;
  if (given("--lambda")) config.lambda = args.lambda;
  if (given("--epsilon")) config.epsilon = args.epsilon;
  if (given("--gamma")) config.gamma = args.gamma;
  if (given("--delta")) config.delta = args.delta;
  if (given("--temperature")) config.temperature = args.temperature;
  if (given("--M")) config.proxies_per_class = args.m;
  if (given("--K")) config.proxies_kept = args.k;
  if (given("--sampler")) config.sampler = args.sampler;
  if (given("--encoder")) config.encoder_mode = args.encoder;
  if (given("--omega")) config.omega = args.omega;
  if (given("--language")) config.language_path = args.language_path;
  if (args.no_normalize) config.normalize_embeddings = false;
  if (!config.seed) config.seed = env_seed().value_or(0);

  if (args.dump) {
    std::cout << mf::dump_run_config(config);
    return kExitOk;
  }
  mf::resolve_defaults(config);

  mf::Dataset data;
  if (!config.data_path.empty()) {
    data = mf::read_dataset_csv(config.data_path);
  } else {
    mf::SyntheticSpec spec;
    spec.num_classes = config.classes;
    spec.samples_per_class = config.per_class;
    spec.ambient_dim = config.data_dim;
    spec.class_spread = config.spread;
    spec.seed = *config.seed;
    data = mf::generate_synthetic(spec);
  }

  std::vector<int> class_ids;
  for (Eigen::Index i = 0; i < data.labels.size(); ++i)
    class_ids.push_back(data.labels[i]);
  const mf::TrainConfig train_config = mf::to_train_config(config, class_ids);

  const mf::TrainResult result = mf::train(data, train_config);

  std::filesystem::create_directories(config.output_dir);
  const std::filesystem::path out(config.output_dir);
  mf::write_history_csv((out / "history.csv").string(), result.history);
  mf::write_embeddings_csv((out / "embeddings.csv").string(),
                           result.embeddings, data.labels);

  mf::EmbeddingBatch final_embeddings;
  final_embeddings.data = result.embeddings;
  final_embeddings.labels = data.labels;
  const mf::RetrievalReport report =
      mf::retrieval_report(final_embeddings, config.ks);
  mf::write_report_json((out / "report.json").string(), report);

  std::cout << "recall@1 = " << mf::format_double(report.recall_at_k.at(1))
            << "\n";
  return kExitOk;
}

struct GradcheckArgs {
  int seeds = 10;
  double tolerance = 1e-4;
  double h = 1e-6;
  bool inject_fault = false;
};

int run_gradcheck(const GradcheckArgs& args) {
  const mf::LossRegistry registry = mf::default_loss_registry();
  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < args.seeds; ++s) seeds.push_back(s);
  std::vector<mf::GradReport> reports =
      mf::check_all(registry, seeds, args.tolerance, args.h);

  if (args.inject_fault && !registry.entries().empty()) {
    const auto& [name, gen] = registry.entries().front();
    mf::CheckCase corrupted = gen(0);
    corrupted.analytic[0](0, 0) += 0.5;
    reports.push_back(mf::check_case(name + "[fault-injected]", 0, corrupted,
                                     args.tolerance, args.h));
  }

  std::printf("%-28s %6s %14s %7s\n", "loss", "seed", "max_rel_err", "status");
  bool all_passed = true;
  for (const mf::GradReport& r : reports) {
    all_passed = all_passed && r.passed;
    std::printf("%-28s %6llu %14.3e %7s%s%s\n", r.loss_name.c_str(),
                static_cast<unsigned long long>(r.seed), r.max_rel_error,
                r.passed ? "ok" : "FAIL", r.note.empty() ? "" : "  # ",
                r.note.c_str());
  }
  std::printf("%zu checks, %s\n", reports.size(),
              all_passed ? "all passed" : "FAILURES");
  return all_passed ? kExitOk : kExitGradcheck;
}

struct EvalArgs {
  std::string embeddings_path;
  std::vector<int> ks = {1, 2, 4, 8};
  std::string out;
  std::string metric = "cosine";
};

int run_eval(const EvalArgs& args) {
  const mf::Dataset data = mf::read_dataset_csv(args.embeddings_path);
  mf::EmbeddingBatch batch;
  batch.data = data.features;
  batch.labels = data.labels;
  const mf::Metric metric = args.metric == "sqeuclidean"
                                ? mf::Metric::kSquaredEuclidean
                                : mf::Metric::kCosine;
  const mf::RetrievalReport report =
      mf::retrieval_report(batch, args.ks, metric);
  if (args.out.empty()) {
    std::cout << mf::report_to_json(report);
  } else {
    mf::write_report_json(args.out, report);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metricforge: deep metric learning losses, training, and evaluation"};
  app.require_subcommand(0, 1);

  bool dump_defaults = false;
  app.add_flag("--dump-config", dump_defaults,
               "print the fully resolved default configuration and exit");

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic dataset CSV");
  gen->add_option("--classes", gen_args.classes, "number of classes");
  gen->add_option("--per-class", gen_args.per_class, "samples per class");
  gen->add_option("--dim", gen_args.dim, "ambient feature dimension");
  gen->add_option("--spread", gen_args.spread, "intra-class noise std");
  CLI::Option* gen_seed = gen->add_option("--seed", gen_args.seed, "rng seed");
  gen->add_option("--out", gen_args.out, "output CSV path");

  TrainArgs train_args;
  CLI::App* tr = app.add_subcommand("train", "train embeddings and report metrics");
  tr->add_option("--config", train_args.config_path, "JSON run configuration");
  tr->add_flag("--dump-config", train_args.dump,
               "print the effective configuration and exit");
  tr->add_option("--data", train_args.data_path, "dataset CSV path");
  tr->add_option("--out", train_args.out_dir, "output directory");
  tr->add_option("--loss", train_args.loss, "loss name");
  tr->add_option("--seed", train_args.seed, "rng seed");
  tr->add_option("--epochs", train_args.epochs, "training epochs");
  tr->add_option("--batch-size", train_args.batch_size, "mini-batch size");
  tr->add_option("--embedding-dim", train_args.dim, "embedding dimension");
  tr->add_option("--lr", train_args.lr, "learning rate");
  tr->add_option("--proxy-lr", train_args.plr, "proxy learning rate");
  tr->add_option("--alpha", train_args.alpha, "loss alpha / margin");
  tr->add_option("--beta", train_args.beta, "loss beta");
  tr->add_option("--lambda", train_args.lambda, "loss lambda");
  tr->add_option("--epsilon", train_args.epsilon, "mining epsilon");
  tr->add_option("--gamma", train_args.gamma, "direction regularizer weight");
  tr->add_option("--delta", train_args.delta, "proxy-anchor margin");
  tr->add_option("--temperature", train_args.temperature, "softmax temperature");
  tr->add_option("--M", train_args.m, "proxies per class");
  tr->add_option("--K", train_args.k, "proxies kept per sample (0 = all)");
  tr->add_option("--sampler", train_args.sampler, "uniform | two_per_class");
  tr->add_option("--encoder", train_args.encoder, "free_embeddings | linear");
  tr->add_option("--omega", train_args.omega, "language guidance weight");
  tr->add_option("--language", train_args.language_path,
                 "label embedding table CSV (empty = synthetic)");
  tr->add_flag("--no-normalize", train_args.no_normalize,
               "skip re-normalization after each step");

  GradcheckArgs gc_args;
  CLI::App* gc = app.add_subcommand(
      "gradcheck", "finite-difference audit of every loss gradient");
  gc->add_option("--seeds", gc_args.seeds, "number of seeds per loss");
  gc->add_option("--tolerance", gc_args.tolerance, "max relative error");
  gc->add_option("--h", gc_args.h, "finite difference step");
  gc->add_flag("--inject-fault", gc_args.inject_fault,
               "corrupt one gradient to exercise the failure path")
      ->group("");  // hidden

  EvalArgs eval_args;
  CLI::App* ev = app.add_subcommand("eval", "retrieval report for an embeddings CSV");
  ev->add_option("--embeddings", eval_args.embeddings_path, "embeddings CSV")
      ->required();
  ev->add_option("--ks", eval_args.ks, "recall@k values");
  ev->add_option("--out", eval_args.out, "write the JSON report here");
  ev->add_option("--metric", eval_args.metric, "cosine | sqeuclidean");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (dump_defaults) {
      mf::RunConfig defaults;
      if (!defaults.seed) defaults.seed = env_seed().value_or(0);
      std::cout << mf::dump_run_config(defaults);
      return kExitOk;
    }
    if (gen->parsed()) {
      gen_args.seed_given = gen_seed->count() > 0;
      return run_gen_data(gen_args);
    }
    if (tr->parsed()) return run_train(*tr, train_args);
    if (gc->parsed()) return run_gradcheck(gc_args);
    if (ev->parsed()) return run_eval(eval_args);
    std::cout << app.help();
    return kExitOk;
  } catch (const mf::NonFiniteLossError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const mf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
