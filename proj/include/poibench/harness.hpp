#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "poibench/metrics.hpp"
#include "poibench/types.hpp"

namespace poibench::harness {

inline constexpr const char* kToolkitVersion = "0.1.0";

/// Where the check-ins come from and how they are cut down to a benchmark
/// store. Relative paths resolve against the directory of the config file
/// they were loaded from.
struct DatasetConfig {
  std::string checkins;
  std::optional<std::string> social;
  std::optional<std::string> categories;
  int min_user_checkins = 10;
  int min_poi_visits = 5;
  double train_fraction = 0.7;
  double validation_fraction = 0.1;
  double sample_fraction = 1.0;  // 1 = keep every user
  std::uint64_t sample_seed = 17;

  bool operator==(const DatasetConfig&) const = default;
};

struct GroupConfig {
  std::array<std::uint32_t, 3> user_thresholds{19, 47, 94};
  std::array<double, 3> item_shares{0.5, 0.3, 0.2};

  bool operator==(const GroupConfig&) const = default;
};

struct MetricConfig {
  int k = 10;
  double beta = 0.5;
  double smoothing = 1.0;
  double madr_epsilon = 1e-12;
  double ndcg_scale = 20.0;
  std::vector<std::vector<double>> user_targets;  // empty -> library defaults
  std::vector<std::vector<double>> item_targets;

  bool operator==(const MetricConfig&) const = default;
};

/// One model entry. Hyperparameters live directly in the model's config
/// object; a scalar pins a value, a list declares a grid axis searched by
/// validation NDCG@k. `hyperparams` keeps the declared axes (singletons for
/// scalars); keys the config leaves out fall back to the library defaults.
struct ModelConfig {
  std::string name;
  std::string kind;  // mostpop | bpr | wmf | pf | geosoca | lore | external
  std::uint64_t seed = 1;
  std::map<std::string, std::vector<double>> hyperparams;
  std::optional<std::string> rankings;  // external kind only: CSV to import

  bool operator==(const ModelConfig&) const = default;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  GroupConfig groups;
  MetricConfig metrics;
  std::vector<ModelConfig> models;  // may be empty: prep/analyze-only runs
  std::string output_dir = "out";
  int threads = 1;

  /// Directory relative config paths resolve against. Set by load_config;
  /// an execution detail, so it takes no part in equality, serialization,
  /// or the config hash.
  std::filesystem::path base_dir;

  bool operator==(const ExperimentConfig& other) const {
    return dataset == other.dataset && groups == other.groups && metrics == other.metrics &&
           models == other.models && output_dir == other.output_dir && threads == other.threads;
  }
};

/// Parse and validate a JSON config. Defaults are filled, unknown keys are
/// rejected with a nearest-key suggestion, and every schema violation is
/// reported in one ConfigError rather than first-error-wins.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& json_text);

/// Canonical serialization: stable key order, every default written out.
/// load(serialize(c)) == c for any valid config.
std::string serialize_config(const ExperimentConfig& config);

/// SHA-256 of the canonical serialization of the result-affecting fields
/// (dataset, groups, metrics, models). output_dir and threads are execution
/// details and do not change the hash.
std::string config_hash(const ExperimentConfig& config);

enum class Stage { prep, analyze, train, recommend, evaluate, report };

const char* stage_name(Stage stage);

/// Which prefix of the pipeline to execute. `model` narrows the train and
/// recommend stages to one entry (the CLI's `train <model>` form) and is
/// rejected for evaluate/report, which need every model.
struct StageSelection {
  Stage upto = Stage::report;
  std::optional<std::string> model;
  bool dump_components = false;  // write components_<name>.csv for contextual models
};

struct StageRecord {
  std::string stage;          // "prep", "train:bpr", ...
  std::string inputs_digest;  // SHA-256 over the stage's config slice + upstream digests
  std::vector<std::pair<std::string, std::string>> artifacts;  // relative path, SHA-256
  bool cached = false;        // reused from the previous run
  double elapsed_ms = 0.0;    // wall clock; logged to timings.json only
};

/// manifest.json carries the deterministic fields (hash, version, stage and
/// artifact digests); wall-clock timings and cache hits go to timings.json,
/// which is a log rather than an artifact, so reruns stay byte-identical.
struct RunManifest {
  std::string config_hash;
  std::string version = kToolkitVersion;
  std::vector<StageRecord> stages;
};

struct RunResult {
  std::optional<metrics::FairnessReport> report;  // set once evaluate has run
  RunManifest manifest;
};

/// Execute the pipeline prefix, caching stages by digest: a stage is skipped
/// when its inputs digest matches the previous manifest and every artifact
/// is still on disk with the recorded digest. Identical config + seeds give
/// byte-identical artifacts. A stage failure aborts with the stage name in
/// the message; artifacts of completed stages stay on disk.
RunResult run(const ExperimentConfig& config, const StageSelection& selection = {});

/// Write report.json, table.csv (best per column `*`, second best `**`),
/// tradeoff.csv (three x/y/auc rows per model), manifest.json and
/// timings.json. Fails before any computation if outdir is not writable.
void emit_report(const metrics::FairnessReport& report, const RunManifest& manifest,
                 const std::filesystem::path& outdir);

/// evaluation.json round-trip. Serialization keeps full double precision,
/// so parse(serialize(r)) reproduces r exactly.
std::string serialize_report(const metrics::FairnessReport& report);
metrics::FairnessReport parse_report(const std::string& json_text);

}  // namespace poibench::harness
