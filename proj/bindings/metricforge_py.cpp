#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "metricforge/config.hpp"
#include "metricforge/eval.hpp"
#include "metricforge/gradcheck.hpp"
#include "metricforge/io.hpp"
#include "metricforge/numerics.hpp"
#include "metricforge/pair_losses.hpp"
#include "metricforge/proxy_losses.hpp"
#include "metricforge/regularizers.hpp"
#include "metricforge/trainer.hpp"

namespace py = pybind11;
using namespace metricforge;

namespace {

EmbeddingBatch make_batch(const Matrix& data, const IntVector& labels) {
  EmbeddingBatch batch;
  batch.data = data;
  batch.labels = labels;
  return batch;
}

// Proxies are class-major: row c*M + m belongs to class c.
ProxySet make_proxies(const Matrix& vectors, int proxies_per_class) {
  ProxySet set;
  set.vectors = vectors;
  set.proxies_per_class = proxies_per_class;
  set.proxy_class.resize(vectors.rows());
  for (Eigen::Index j = 0; j < vectors.rows(); ++j)
    set.proxy_class[j] = static_cast<int>(j) / proxies_per_class;
  set.normalized = false;
  return set;
}

MsMiningMasks make_masks(const BoolMatrix& pos, const BoolMatrix& neg,
                         double epsilon) {
  MsMiningMasks masks;
  masks.positive_mask = pos;
  masks.negative_mask = neg;
  masks.epsilon = epsilon;
  return masks;
}

SimilarityMatrix cosine_sim(const Matrix& values) {
  return SimilarityMatrix{values, Metric::kCosine, IndexKind::kSample,
                          IndexKind::kSample};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deep metric learning losses with analytic gradients, a "
            "deterministic trainer, and retrieval metrics.";
  m.attr("__version__") = "0.1.0";

  py::register_exception<Error>(m, "MetricForgeError");

  py::class_<LossOutput>(m, "LossOutput")
      .def_readonly("value", &LossOutput::value)
      .def_readonly("grad_embeddings", &LossOutput::grad_embeddings)
      .def_property_readonly(
          "grad_proxies",
          [](const LossOutput& out) -> py::object {
            if (!out.grad_proxies) return py::none();
            return py::cast(*out.grad_proxies);
          })
      .def("__repr__", [](const LossOutput& out) {
        return "<LossOutput value=" + std::to_string(out.value) + ">";
      });

  py::class_<DirectionCos>(m, "DirectionCos")
      .def_readonly("value", &DirectionCos::value)
      .def_readonly("grad_anchor", &DirectionCos::grad_anchor)
      .def_readonly("grad_positive", &DirectionCos::grad_positive)
      .def_readonly("grad_negative", &DirectionCos::grad_negative);

  // numerics
  m.def("l2_normalize", &l2_normalize, py::arg("v"));
  m.def(
      "cosine_similarity_matrix",
      [](const Matrix& a, const Matrix& b) {
        return cosine_similarity_matrix(make_batch(a, IntVector::Zero(a.rows())),
                                        make_batch(b, IntVector::Zero(b.rows())))
            .values;
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "squared_euclidean_matrix",
      [](const Matrix& a, const Matrix& b) {
        return squared_distance_matrix(a, b);
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "masked_softmax",
      [](const Vector& row, const BoolVector& mask) {
        return masked_softmax(row, mask);
      },
      py::arg("row"), py::arg("mask"));
  m.def("log_sum_exp", &log_sum_exp, py::arg("values"));

  // pair losses
  m.def("contrastive_loss", &contrastive_loss, py::arg("f_i"), py::arg("f_j"),
        py::arg("same_class"), py::arg("alpha"));
  m.def("triplet_loss_euclidean", &triplet_loss_euclidean, py::arg("f_a"),
        py::arg("f_p"), py::arg("f_n"), py::arg("alpha"));
  m.def("triplet_loss_cosine", &triplet_loss_cosine, py::arg("f_a"),
        py::arg("f_p"), py::arg("f_n"), py::arg("alpha"));
  m.def(
      "npair_loss",
      [](const Matrix& data, const IntVector& labels, bool exponential) {
        return npair_loss(make_batch(data, labels), exponential);
      },
      py::arg("data"), py::arg("labels"), py::arg("exponential_form") = true);
  m.def(
      "ms_mine",
      [](const Matrix& data, const IntVector& labels, double epsilon) {
        const SimilarityMatrix sim =
            cosine_similarity_matrix(make_batch(data, labels),
                                     make_batch(data, labels));
        const MsMiningMasks masks = ms_mine(sim, labels, epsilon);
        return py::make_tuple(masks.positive_mask, masks.negative_mask);
      },
      py::arg("data"), py::arg("labels"), py::arg("epsilon"),
      "Multi-similarity pair filtering; returns (positive_mask, negative_mask).");
  m.def(
      "ms_loss",
      [](const Matrix& data, const IntVector& labels, const BoolMatrix& pos,
         const BoolMatrix& neg, double alpha, double beta, double lambda) {
        return ms_loss(make_batch(data, labels), make_masks(pos, neg, 0.0),
                       alpha, beta, lambda);
      },
      py::arg("data"), py::arg("labels"), py::arg("positive_mask"),
      py::arg("negative_mask"), py::arg("alpha") = 2.0, py::arg("beta") = 50.0,
      py::arg("lambda_") = 0.5);

  // proxy losses
  m.def(
      "nca_loss",
      [](const Matrix& data, const IntVector& labels) {
        return nca_loss(make_batch(data, labels));
      },
      py::arg("data"), py::arg("labels"));
  m.def(
      "proxynca_loss",
      [](const Matrix& data, const IntVector& labels, const Matrix& proxies) {
        return proxynca_loss(make_batch(data, labels), make_proxies(proxies, 1));
      },
      py::arg("data"), py::arg("labels"), py::arg("proxies"));
  m.def(
      "proxynca_pp_loss",
      [](const Matrix& data, const IntVector& labels, const Matrix& proxies,
         double temperature) {
        return proxynca_pp_loss(make_batch(data, labels),
                                make_proxies(proxies, 1), temperature);
      },
      py::arg("data"), py::arg("labels"), py::arg("proxies"),
      py::arg("temperature") = 0.5);
  m.def(
      "proxy_anchor_loss",
      [](const Matrix& data, const IntVector& labels, const Matrix& proxies,
         double alpha, double delta) {
        return proxy_anchor_loss(make_batch(data, labels),
                                 make_proxies(proxies, 1), alpha, delta);
      },
      py::arg("data"), py::arg("labels"), py::arg("proxies"),
      py::arg("alpha") = 32.0, py::arg("delta") = 0.1);
  m.def(
      "proxygml_loss",
      [](const Matrix& data, const IntVector& labels, const Matrix& proxies,
         int m_per_class, int k, double lambda) {
        ProxyGmlConfig cfg;
        cfg.M = m_per_class;
        cfg.K = k;
        cfg.lambda = lambda;
        return proxygml_loss(make_batch(data, labels),
                             make_proxies(proxies, m_per_class), cfg);
      },
      py::arg("data"), py::arg("labels"), py::arg("proxies"), py::arg("M"),
      py::arg("K"), py::arg("lambda_") = 0.3,
      "Proxies are class-major: row c*M + m belongs to class c.");

  // regularizers
  m.def(
      "language_distill_loss",
      [](const Matrix& s_img, const Matrix& s_lang, double gamma_l) {
        return language_distill_loss(cosine_sim(s_img), cosine_sim(s_lang),
                                     gamma_l);
      },
      py::arg("s_img"), py::arg("s_lang"), py::arg("gamma_l") = 1.0,
      "Gradient is taken with respect to the entries of s_img.");
  m.def("combine_with_language", &combine_with_language, py::arg("dml"),
        py::arg("lang"), py::arg("omega"));
  m.def("direction_cos", &direction_cos, py::arg("f_a"), py::arg("f_p"),
        py::arg("f_n"));
  m.def(
      "directed_triplet_loss",
      [](const Vector& a, const Vector& p, const Vector& n, double alpha,
         double gamma, bool penalty, bool hinge) {
        DirectedOptions opts;
        opts.term = penalty ? DirectionTerm::kPenalty : DirectionTerm::kDiscount;
        opts.hinge = hinge;
        return directed_triplet_loss(a, p, n, alpha, gamma, opts);
      },
      py::arg("f_a"), py::arg("f_p"), py::arg("f_n"), py::arg("alpha"),
      py::arg("gamma"), py::arg("penalty") = true, py::arg("hinge") = true);
  m.def(
      "directed_ms_loss",
      [](const Matrix& data, const IntVector& labels, const BoolMatrix& pos,
         const BoolMatrix& neg, double alpha, double beta, double lambda,
         double gamma) {
        return directed_ms_loss(make_batch(data, labels),
                                make_masks(pos, neg, 0.0), alpha, beta, lambda,
                                gamma);
      },
      py::arg("data"), py::arg("labels"), py::arg("positive_mask"),
      py::arg("negative_mask"), py::arg("alpha") = 2.0, py::arg("beta") = 50.0,
      py::arg("lambda_") = 0.5, py::arg("gamma") = 1.0);
  m.def(
      "directed_proxynca_loss",
      [](const Matrix& data, const IntVector& labels, const Matrix& proxies,
         double gamma) {
        return directed_proxynca_loss(make_batch(data, labels),
                                      make_proxies(proxies, 1), gamma);
      },
      py::arg("data"), py::arg("labels"), py::arg("proxies"),
      py::arg("gamma") = 1.0);

  // data, training, evaluation
  m.def(
      "generate_synthetic",
      [](int classes, int per_class, int dim, double spread,
         std::uint64_t seed) {
        SyntheticSpec spec;
        spec.num_classes = classes;
        spec.samples_per_class = per_class;
        spec.ambient_dim = dim;
        spec.class_spread = spread;
        spec.seed = seed;
        const Dataset data = generate_synthetic(spec);
        return py::make_tuple(data.features, data.labels);
      },
      py::arg("classes") = 8, py::arg("per_class") = 50, py::arg("dim") = 32,
      py::arg("spread") = 0.15, py::arg("seed") = 0);
  m.def(
      "train",
      [](const Matrix& features, const IntVector& labels,
         const std::string& config_json) {
        Dataset data;
        data.features = features;
        data.labels = labels;
        const RunConfig config = parse_run_config(config_json);
        std::vector<int> class_ids;
        for (Eigen::Index i = 0; i < labels.size(); ++i)
          class_ids.push_back(labels[i]);
        const TrainResult result =
            train(data, to_train_config(config, class_ids));

        py::list history;
        for (const EpochRecord& r : result.history) {
          py::dict row;
          row["epoch"] = r.epoch;
          row["mean_loss"] = r.mean_loss;
          row["recall_at_1"] = r.recall_at_1;
          row["intra_inter_gap"] = r.intra_inter_gap;
          history.append(row);
        }
        py::dict out;
        out["history"] = history;
        out["embeddings"] = result.embeddings;
        out["proxies"] = result.proxies
                             ? py::cast(result.proxies->vectors)
                             : py::object(py::none());
        return out;
      },
      py::arg("features"), py::arg("labels"), py::arg("config_json"),
      "Runs the deterministic trainer; config_json uses the CLI's schema.");
  m.def(
      "recall_at_k",
      [](const Matrix& data, const IntVector& labels,
         const std::vector<int>& ks) {
        return recall_at_k(make_batch(data, labels), ks);
      },
      py::arg("data"), py::arg("labels"), py::arg("ks"));
  m.def(
      "separation_stats",
      [](const Matrix& data, const IntVector& labels) {
        return separation_stats(make_batch(data, labels));
      },
      py::arg("data"), py::arg("labels"));
  m.def(
      "gradcheck",
      [](int seeds, double tolerance, double h) {
        std::vector<std::uint64_t> seed_list;
        for (int s = 0; s < seeds; ++s) seed_list.push_back(s);
        const auto reports =
            check_all(default_loss_registry(), seed_list, tolerance, h);
        py::list out;
        for (const GradReport& r : reports) {
          py::dict row;
          row["loss"] = r.loss_name;
          row["seed"] = r.seed;
          row["max_rel_error"] = r.max_rel_error;
          row["passed"] = r.passed;
          out.append(row);
        }
        return out;
      },
      py::arg("seeds") = 3, py::arg("tolerance") = 1e-4, py::arg("h") = 1e-6,
      "Finite-difference audit of every loss; returns one record per "
      "(loss, seed).");
  m.def("dump_default_config",
        []() { return dump_run_config(RunConfig{}); });
}
