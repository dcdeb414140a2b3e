#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "poibench/errors.hpp"
#include "poibench/harness.hpp"
#include "poibench/metrics.hpp"
#include "poibench/synthetic.hpp"
#include "poibench/types.hpp"

namespace py = pybind11;
using namespace poibench;

namespace {

metrics::GroupDistribution make_dist(const std::vector<double>& probs) {
  metrics::GroupDistribution dist;
  for (std::size_t i = 0; i < probs.size(); ++i) dist.labels.push_back("g" + std::to_string(i + 1));
  dist.probs = probs;
  return dist;
}

harness::Stage stage_from(const std::string& name) {
  if (name == "prep") return harness::Stage::prep;
  if (name == "analyze") return harness::Stage::analyze;
  if (name == "train") return harness::Stage::train;
  if (name == "recommend") return harness::Stage::recommend;
  if (name == "evaluate") return harness::Stage::evaluate;
  if (name == "report") return harness::Stage::report;
  throw ConfigError("unknown stage \"" + name +
                    "\" (expected prep, analyze, train, recommend, evaluate or report)");
}

py::object json_loads(const std::string& text) {
  return py::module_::import("json").attr("loads")(text);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "benchmark toolkit for accuracy and two-sided fairness in POI recommendation";
  m.attr("__version__") = harness::kToolkitVersion;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<harness::ExperimentConfig>(m, "ExperimentConfig",
                                        "A validated experiment description.")
      .def_readwrite("output_dir", &harness::ExperimentConfig::output_dir)
      .def_readwrite("threads", &harness::ExperimentConfig::threads)
      .def_property_readonly("models",
                             [](const harness::ExperimentConfig& cfg) {
                               std::vector<std::string> names;
                               for (const auto& model : cfg.models) names.push_back(model.name);
                               return names;
                             })
      .def(py::self == py::self)
      .def("__repr__", [](const harness::ExperimentConfig& cfg) {
        return "<ExperimentConfig models=" + std::to_string(cfg.models.size()) + " output_dir='" +
               cfg.output_dir + "'>";
      });

  m.def("load_config", [](const std::string& path) { return harness::load_config(path); },
        py::arg("path"), "Parse and validate a JSON config file.");
  m.def("parse_config", &harness::parse_config, py::arg("text"),
        "Parse and validate a JSON config string.");
  m.def("serialize_config", &harness::serialize_config, py::arg("config"),
        "Canonical serialization; parse_config(serialize_config(c)) == c.");
  m.def("config_hash", &harness::config_hash, py::arg("config"),
        "SHA-256 over the result-affecting config fields.");

  m.def(
      "run",
      [](const harness::ExperimentConfig& cfg, const std::string& upto,
         const std::optional<std::string>& model, bool dump_components) {
        harness::StageSelection selection;
        selection.upto = stage_from(upto);
        selection.model = model;
        selection.dump_components = dump_components;
        std::optional<harness::RunResult> result;
        {
          py::gil_scoped_release release;
          result = harness::run(cfg, selection);
        }
        py::dict out;
        out["config_hash"] = result->manifest.config_hash;
        out["version"] = result->manifest.version;
        py::list stages;
        for (const auto& rec : result->manifest.stages) {
          py::dict stage;
          stage["stage"] = rec.stage;
          stage["cached"] = rec.cached;
          py::list artifacts;
          for (const auto& [path, digest] : rec.artifacts) {
            py::dict artifact;
            artifact["path"] = path;
            artifact["sha256"] = digest;
            artifacts.append(artifact);
          }
          stage["artifacts"] = artifacts;
          stages.append(stage);
        }
        out["stages"] = stages;
        out["report"] = result->report
                            ? json_loads(harness::serialize_report(*result->report))
                            : py::object(py::none());
        return out;
      },
      py::arg("config"), py::arg("upto") = "report", py::arg("model") = py::none(),
      py::arg("dump_components") = false,
      "Execute the pipeline up to a stage, caching finished stages by digest.\n"
      "Returns the manifest as a dict; 'report' holds the evaluation once the\n"
      "evaluate stage has run.");

  m.def(
      "ndcg_at_k",
      [](const std::vector<PoiIdx>& ranking, std::vector<PoiIdx> relevant, int k) {
        RankedSlate slate;
        slate.entries.reserve(ranking.size());
        double score = static_cast<double>(ranking.size());
        for (const PoiIdx poi : ranking) slate.entries.push_back({poi, score--});
        std::sort(relevant.begin(), relevant.end());
        relevant.erase(std::unique(relevant.begin(), relevant.end()), relevant.end());
        return metrics::ndcg_at_k(slate, relevant, k);
      },
      py::arg("ranking"), py::arg("relevant"), py::arg("k") = 10,
      "Binary-relevance NDCG of a ranked item list against a relevant set.");

  m.def(
      "gce",
      [](const std::vector<double>& target, const std::vector<double>& model, double beta) {
        metrics::GceParams params;
        params.beta = beta;
        return metrics::gce(make_dist(target), make_dist(model), params);
      },
      py::arg("target"), py::arg("model"), py::arg("beta") = 0.5,
      "Generalized cross entropy between a target and a model group\n"
      "distribution; 0 at equality, negative otherwise.");

  m.def(
      "madr",
      [](const std::vector<std::optional<double>>& values, double epsilon) {
        metrics::GroupPerformance perf;
        perf.metric = "value";
        for (std::size_t i = 0; i < values.size(); ++i)
          perf.labels.push_back("g" + std::to_string(i + 1));
        perf.values = values;
        const metrics::MadrResult result = metrics::madr(perf, epsilon);
        return py::make_tuple(result.madr, result.fairness);
      },
      py::arg("values"), py::arg("epsilon") = 1e-12,
      "Mean absolute deviation over group pairs (None entries are skipped).\n"
      "Returns (madr, fairness) where fairness = 1 / (madr + epsilon).");

  m.def("tradeoff_auc", &metrics::tradeoff_auc, py::arg("x"), py::arg("y"),
        "Triangle area x * y / 2 under a point in a trade-off plot.");

  m.def(
      "write_corpus",
      [](const std::string& dir, std::size_t users, std::size_t pois, std::size_t categories,
         std::size_t clusters, std::uint64_t seed) {
        synth::CorpusParams params;
        params.n_users = users;
        params.n_pois = pois;
        params.n_categories = categories;
        params.n_clusters = clusters;
        params.seed = seed;
        const synth::CorpusFiles files = synth::write_corpus(params, dir);
        return py::make_tuple(files.checkins.string(), files.social.string(),
                              files.categories.string());
      },
      py::arg("dir"), py::arg("users") = 200, py::arg("pois") = 500, py::arg("categories") = 20,
      py::arg("clusters") = 5, py::arg("seed") = 7,
      "Write a synthetic check-in corpus (checkins, social, categories) into dir.");
}
