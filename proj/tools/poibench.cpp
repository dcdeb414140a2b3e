#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "poibench/errors.hpp"
#include "poibench/harness.hpp"
#include "poibench/synthetic.hpp"

namespace fs = std::filesystem;
using namespace poibench;

namespace {

struct GlobalOpts {
  std::string config = "config.json";
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> sample;
};

/// Config file first, then command-line overrides. Flag paths are relative
/// to the working directory, unlike config values, which are relative to
/// the config file; making the override absolute keeps both rules intact.
harness::ExperimentConfig load_with_overrides(const GlobalOpts& opts) {
  harness::ExperimentConfig cfg = harness::load_config(opts.config);
  if (opts.out) cfg.output_dir = fs::absolute(*opts.out).string();
  if (opts.threads) {
    if (*opts.threads < 1) throw ConfigError("--threads must be >= 1");
    cfg.threads = *opts.threads;
  }
  if (opts.sample) {
    if (!(*opts.sample > 0.0) || *opts.sample > 1.0)
      throw ConfigError("--sample must be in (0, 1]");
    cfg.dataset.sample_fraction = *opts.sample;
  }
  if (opts.seed) {
    cfg.dataset.sample_seed = *opts.seed;
    for (auto& model : cfg.models) model.seed = *opts.seed;
  }
  return cfg;
}

void run_pipeline(const GlobalOpts& opts, harness::StageSelection selection) {
  const harness::ExperimentConfig cfg = load_with_overrides(opts);
  const harness::RunResult result = harness::run(cfg, selection);
  for (const auto& rec : result.manifest.stages)
    std::printf("%-24s %s\n", rec.stage.c_str(), rec.cached ? "cached" : "done");
  fs::path outdir = cfg.output_dir;
  if (outdir.is_relative()) outdir = cfg.base_dir / outdir;
  std::printf("outputs in %s\n", outdir.string().c_str());
}

void run_synth(const synth::CorpusParams& params, const std::string& dir) {
  const synth::CorpusFiles files = synth::write_corpus(params, fs::absolute(dir));
  std::printf("%s\n%s\n%s\n", files.checkins.string().c_str(), files.social.string().c_str(),
              files.categories.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"benchmark toolkit for accuracy and two-sided fairness in POI recommendation"};
  app.require_subcommand(1);

  GlobalOpts opts;
  app.add_option("--config", opts.config, "experiment config file")->capture_default_str();
  app.add_option("--out", opts.out, "output directory (overrides the config)");
  app.add_option("--seed", opts.seed, "override the sampling seed and every model seed");
  app.add_option("--threads", opts.threads, "worker threads (overrides the config)");
  app.add_option("--sample", opts.sample, "user sampling fraction in (0, 1]");

  const auto stage_command = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    return sub;
  };

  stage_command("prep", "ingest, filter, split and store the dataset");
  stage_command("analyze", "profile activity and popularity groups");
  CLI::App* train = stage_command("train", "select hyperparameters and fit models");
  std::string train_model;
  train->add_option("model", train_model, "restrict to one configured model");
  CLI::App* recommend = stage_command("recommend", "produce top-k ranking files");
  std::string recommend_model;
  bool dump_components = false;
  recommend->add_option("model", recommend_model, "restrict to one configured model");
  recommend->add_flag("--dump-components", dump_components,
                      "also write components_<model>.csv for contextual models");
  stage_command("evaluate", "compute accuracy and fairness metrics");
  stage_command("report", "emit report.json, table.csv and tradeoff.csv");
  stage_command("run", "execute every stage");

  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic check-in corpus");
  synth::CorpusParams synth_params;
  std::string synth_dir;
  synth_cmd->add_option("--out", synth_dir, "directory for the corpus files")->required();
  synth_cmd->add_option("--users", synth_params.n_users, "number of users")
      ->capture_default_str();
  synth_cmd->add_option("--pois", synth_params.n_pois, "number of POIs")->capture_default_str();
  synth_cmd->add_option("--categories", synth_params.n_categories, "number of POI categories")
      ->capture_default_str();
  synth_cmd->add_option("--clusters", synth_params.n_clusters, "number of geographic clusters")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_params.seed, "corpus seed")->capture_default_str();

  try {
    app.parse(argc, argv);

    harness::StageSelection selection;
    if (app.got_subcommand("prep")) {
      selection.upto = harness::Stage::prep;
    } else if (app.got_subcommand("analyze")) {
      selection.upto = harness::Stage::analyze;
    } else if (app.got_subcommand("train")) {
      selection.upto = harness::Stage::train;
      if (!train_model.empty()) selection.model = train_model;
    } else if (app.got_subcommand("recommend")) {
      selection.upto = harness::Stage::recommend;
      if (!recommend_model.empty()) selection.model = recommend_model;
      selection.dump_components = dump_components;
    } else if (app.got_subcommand("evaluate")) {
      selection.upto = harness::Stage::evaluate;
    } else if (app.got_subcommand("synth")) {
      run_synth(synth_params, synth_dir);
      return kExitOk;
    }
    // "report" and "run" both take the default: the full pipeline, with
    // caching making already-computed stages free
    run_pipeline(opts, selection);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitOk;
}
