#include "poibench/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <string_view>
#include <utility>

#include "json.hpp"
#include "poibench/contextual.hpp"
#include "poibench/dataset.hpp"
#include "poibench/errors.hpp"
#include "poibench/profiling.hpp"
#include "poibench/recommenders.hpp"
#include "poibench/util/io.hpp"
#include "poibench/util/sha256.hpp"

namespace poibench::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// small shared helpers

std::string fmt_full(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_cell(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string sha256_file(const fs::path& path) { return util::Sha256::of(util::read_file(path)); }

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path fp(p);
  return fp.is_absolute() ? fp : base / fp;
}

bool integral_value(double v) {
  return std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9.0e15;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t ins = row[j - 1] + 1;
      const std::size_t del = row[j] + 1;
      const std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      diag = row[j];
      row[j] = std::min({ins, del, sub});
    }
  }
  return row[b.size()];
}

// ---------------------------------------------------------------------------
// config schema

std::string jpath(const std::string& path, const char* key) {
  return path.empty() ? key : path + "." + key;
}

struct Problems {
  std::vector<std::string> items;

  void add(const std::string& path, const std::string& what) {
    items.push_back(path + ": " + what);
  }
  void raise_if_any() const {
    if (items.empty()) return;
    std::string msg = "config invalid (" + std::to_string(items.size()) +
                      (items.size() == 1 ? " problem):" : " problems):");
    for (const auto& item : items) msg += "\n  - " + item;
    throw ConfigError(msg);
  }
};

void check_unknown_keys(const json& obj, const std::vector<std::string>& known,
                        const std::string& path, Problems& problems) {
  for (const auto& item : obj.items()) {
    const std::string& key = item.key();
    if (std::find(known.begin(), known.end(), key) != known.end()) continue;
    std::string best;
    std::size_t best_d = std::numeric_limits<std::size_t>::max();
    for (const auto& candidate : known) {
      const std::size_t d = levenshtein(key, candidate);
      if (d < best_d) {
        best_d = d;
        best = candidate;
      }
    }
    std::string msg = "unknown key";
    if (!known.empty() && best_d <= std::max<std::size_t>(3, key.size() / 2)) {
      const std::string prefix = path.empty() ? "" : path + ".";
      msg += " (did you mean \"" + prefix + best + "\"?)";
    }
    problems.add(path.empty() ? key : path + "." + key, msg);
  }
}

double get_double(const json& obj, const char* key, double def, const std::string& path,
                  Problems& problems) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_number()) {
    problems.add(jpath(path, key), "expected a number");
    return def;
  }
  return v.get<double>();
}

int get_int(const json& obj, const char* key, int def, const std::string& path,
            Problems& problems) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (v.is_number_integer() || v.is_number_unsigned()) return v.get<int>();
  if (v.is_number_float() && integral_value(v.get<double>()))
    return static_cast<int>(v.get<double>());
  problems.add(jpath(path, key), "expected an integer");
  return def;
}

std::uint64_t get_seed(const json& obj, const char* key, std::uint64_t def,
                       const std::string& path, Problems& problems) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
  problems.add(jpath(path, key), "expected a non-negative integer");
  return def;
}

std::string get_string(const json& obj, const char* key, const std::string& def,
                       const std::string& path, Problems& problems) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_string()) {
    problems.add(jpath(path, key), "expected a string");
    return def;
  }
  return v.get<std::string>();
}

std::optional<std::string> get_opt_string(const json& obj, const char* key,
                                          const std::string& path, Problems& problems) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  const json& v = obj.at(key);
  if (!v.is_string()) {
    problems.add(jpath(path, key), "expected a string");
    return std::nullopt;
  }
  return v.get<std::string>();
}

// Hyperparameter vocabulary per model kind. A scalar config value is a
// pinned axis of length one; a list is a grid axis.
struct HyperSpec {
  const char* key;
  double min;
  bool exclusive;  // true: value must be strictly above min
  bool integral;
  double max = std::numeric_limits<double>::infinity();
};

const std::vector<HyperSpec>& hyper_specs(const std::string& kind) {
  static const std::vector<HyperSpec> none{};
  static const std::vector<HyperSpec> bpr{
      {"d", 1, false, true},
      {"learning_rate", 0, true, false},
      {"regularization", 0, false, false},
      {"steps_per_interaction", 0, true, false},
      {"item_bias", 0, false, true, 1},
  };
  static const std::vector<HyperSpec> wmf{
      {"d", 1, false, true},
      {"alpha", 0, false, false},
      {"regularization", 0, false, false},
      {"sweeps", 1, false, true},
  };
  static const std::vector<HyperSpec> pf{
      {"d", 1, false, true},           {"a", 0, true, false},
      {"b", 0, true, false},           {"c", 0, true, false},
      {"e", 0, true, false},           {"max_iterations", 1, false, true},
      {"tolerance", 0, true, false},
  };
  static const std::vector<HyperSpec> geosoca{
      {"floor_km", 0, true, false},      {"adaptivity", 0, false, false},
      {"geo_weight", 0, false, false},   {"social_weight", 0, false, false},
      {"categorical_weight", 0, false, false},
  };
  static const std::vector<HyperSpec> lore{
      {"floor_km", 0, true, false},      {"adaptivity", 0, false, false},
      {"recency_base", 0, true, false},  {"max_gap", 0, false, true},
      {"geo_weight", 0, false, false},   {"social_weight", 0, false, false},
      {"sequential_weight", 0, false, false},
  };
  if (kind == "bpr") return bpr;
  if (kind == "wmf") return wmf;
  if (kind == "pf") return pf;
  if (kind == "geosoca") return geosoca;
  if (kind == "lore") return lore;
  return none;  // mostpop, external
}

bool known_kind(const std::string& kind) {
  static const std::vector<std::string> kinds{"mostpop", "bpr", "wmf",     "pf",
                                              "geosoca", "lore", "external"};
  return std::find(kinds.begin(), kinds.end(), kind) != kinds.end();
}

void check_hyper_value(const HyperSpec& spec, double v, const std::string& path,
                       Problems& problems) {
  std::string why;
  if (!std::isfinite(v)) {
    why = "must be finite";
  } else if (spec.integral && !integral_value(v)) {
    why = "must be an integer";
  } else if (spec.exclusive ? !(v > spec.min) : !(v >= spec.min)) {
    why = std::string("must be ") + (spec.exclusive ? "> " : ">= ") + fmt_cell(spec.min);
  } else if (v > spec.max) {
    why = "must be <= " + fmt_cell(spec.max);
  }
  if (!why.empty()) problems.add(path, why);
}

void parse_model_hyperparams(const json& obj, ModelConfig& model, Problems& problems) {
  for (const HyperSpec& spec : hyper_specs(model.kind)) {
    if (!obj.contains(spec.key)) continue;
    const json& v = obj.at(spec.key);
    const std::string path = model.name + "." + spec.key;
    std::vector<double> axis;
    if (v.is_boolean()) {
      axis.push_back(v.get<bool>() ? 1.0 : 0.0);
    } else if (v.is_number()) {
      axis.push_back(v.get<double>());
    } else if (v.is_array() && !v.empty()) {
      bool ok = true;
      for (const json& e : v) {
        if (!e.is_number()) {
          ok = false;
          break;
        }
        axis.push_back(e.get<double>());
      }
      if (!ok) {
        problems.add(path, "expected a number or a list of numbers");
        continue;
      }
    } else {
      problems.add(path, "expected a number or a non-empty list of numbers");
      continue;
    }
    for (double value : axis) check_hyper_value(spec, value, path, problems);
    model.hyperparams[spec.key] = std::move(axis);
  }
}

ModelConfig parse_model(const json& obj, std::size_t index, Problems& problems) {
  ModelConfig model;
  const std::string fallback_path = "models[" + std::to_string(index) + "]";
  if (!obj.is_object()) {
    problems.add(fallback_path, "expected an object");
    return model;
  }
  model.name = get_string(obj, "name", "", fallback_path, problems);
  const std::string path = model.name.empty() ? fallback_path : model.name;
  if (model.name.empty()) {
    problems.add(fallback_path + ".name", "required");
  } else if (model.name.find_first_not_of(
                 "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._-") !=
             std::string::npos) {
    problems.add(path + ".name", "may only contain letters, digits, '.', '_' and '-'");
  }
  model.kind = get_string(obj, "kind", "", path, problems);
  if (model.kind.empty()) {
    problems.add(path + ".kind", "required");
    return model;
  }
  if (!known_kind(model.kind)) {
    problems.add(path + ".kind",
                 "unknown kind \"" + model.kind +
                     "\" (expected mostpop, bpr, wmf, pf, geosoca, lore or external)");
    return model;
  }
  model.seed = get_seed(obj, "seed", 1, path, problems);

  std::vector<std::string> known{"name", "kind", "seed"};
  for (const HyperSpec& spec : hyper_specs(model.kind)) known.push_back(spec.key);
  if (model.kind == "external") {
    known.push_back("rankings");
    model.rankings = get_opt_string(obj, "rankings", path, problems);
    if (!model.rankings || model.rankings->empty())
      problems.add(path + ".rankings", "required for external models");
  }
  check_unknown_keys(obj, known, path, problems);
  parse_model_hyperparams(obj, model, problems);
  return model;
}

void parse_dataset(const json& obj, DatasetConfig& out, Problems& problems) {
  const std::string path = "dataset";
  if (!obj.is_object()) {
    problems.add(path, "expected an object");
    return;
  }
  check_unknown_keys(obj,
                     {"checkins", "social", "categories", "min_user_checkins", "min_poi_visits",
                      "train_fraction", "validation_fraction", "sample_fraction", "sample_seed"},
                     path, problems);
  out.checkins = get_string(obj, "checkins", "", path, problems);
  if (out.checkins.empty()) problems.add(path + ".checkins", "required");
  out.social = get_opt_string(obj, "social", path, problems);
  out.categories = get_opt_string(obj, "categories", path, problems);
  out.min_user_checkins = get_int(obj, "min_user_checkins", out.min_user_checkins, path, problems);
  out.min_poi_visits = get_int(obj, "min_poi_visits", out.min_poi_visits, path, problems);
  out.train_fraction = get_double(obj, "train_fraction", out.train_fraction, path, problems);
  out.validation_fraction =
      get_double(obj, "validation_fraction", out.validation_fraction, path, problems);
  out.sample_fraction = get_double(obj, "sample_fraction", out.sample_fraction, path, problems);
  out.sample_seed = get_seed(obj, "sample_seed", out.sample_seed, path, problems);

  if (out.min_user_checkins < 0) problems.add(path + ".min_user_checkins", "must be >= 0");
  if (out.min_poi_visits < 0) problems.add(path + ".min_poi_visits", "must be >= 0");
  if (!(out.train_fraction > 0.0) || !(out.validation_fraction > 0.0) ||
      !(out.train_fraction + out.validation_fraction < 1.0))
    problems.add(path, "train_fraction and validation_fraction must be positive and sum below 1");
  if (!(out.sample_fraction > 0.0) || out.sample_fraction > 1.0)
    problems.add(path + ".sample_fraction", "must be in (0, 1]");
}

void parse_groups(const json& obj, GroupConfig& out, Problems& problems) {
  const std::string path = "groups";
  if (!obj.is_object()) {
    problems.add(path, "expected an object");
    return;
  }
  check_unknown_keys(obj, {"user_thresholds", "item_shares"}, path, problems);
  if (obj.contains("user_thresholds")) {
    const json& v = obj.at("user_thresholds");
    bool ok = v.is_array() && v.size() == 3;
    if (ok)
      for (const json& e : v)
        ok = ok && (e.is_number_unsigned() || (e.is_number_integer() && e.get<std::int64_t>() > 0));
    if (!ok) {
      problems.add(path + ".user_thresholds", "expected three positive integers");
    } else {
      for (std::size_t i = 0; i < 3; ++i) out.user_thresholds[i] = v[i].get<std::uint32_t>();
      if (!(out.user_thresholds[0] < out.user_thresholds[1] &&
            out.user_thresholds[1] < out.user_thresholds[2]))
        problems.add(path + ".user_thresholds", "must be strictly increasing");
    }
  }
  if (obj.contains("item_shares")) {
    const json& v = obj.at("item_shares");
    bool ok = v.is_array() && v.size() == 3;
    if (ok)
      for (const json& e : v) ok = ok && e.is_number();
    if (!ok) {
      problems.add(path + ".item_shares", "expected three numbers");
    } else {
      double sum = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        out.item_shares[i] = v[i].get<double>();
        sum += out.item_shares[i];
        if (out.item_shares[i] < 0.0) problems.add(path + ".item_shares", "must be non-negative");
      }
      if (std::abs(sum - 1.0) > 1e-9) problems.add(path + ".item_shares", "must sum to 1");
    }
  }
}

void parse_targets(const json& obj, const char* key, std::size_t groups,
                   std::vector<std::vector<double>>& out, const std::string& path,
                   Problems& problems) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_array()) {
    problems.add(jpath(path, key), "expected a list of probability vectors");
    return;
  }
  for (std::size_t t = 0; t < v.size(); ++t) {
    const json& row = v[t];
    const std::string row_path = path + "." + key + "[" + std::to_string(t) + "]";
    bool ok = row.is_array() && row.size() == groups;
    if (ok)
      for (const json& e : row) ok = ok && e.is_number();
    if (!ok) {
      problems.add(row_path, "expected " + std::to_string(groups) + " numbers");
      continue;
    }
    std::vector<double> probs;
    double sum = 0.0;
    for (const json& e : row) {
      probs.push_back(e.get<double>());
      sum += probs.back();
      if (probs.back() < 0.0) problems.add(row_path, "probabilities must be non-negative");
    }
    if (std::abs(sum - 1.0) > 1e-9) problems.add(row_path, "probabilities must sum to 1");
    out.push_back(std::move(probs));
  }
}

void parse_metrics(const json& obj, MetricConfig& out, Problems& problems) {
  const std::string path = "metrics";
  if (!obj.is_object()) {
    problems.add(path, "expected an object");
    return;
  }
  check_unknown_keys(
      obj, {"k", "beta", "smoothing", "madr_epsilon", "ndcg_scale", "user_targets", "item_targets"},
      path, problems);
  out.k = get_int(obj, "k", out.k, path, problems);
  out.beta = get_double(obj, "beta", out.beta, path, problems);
  out.smoothing = get_double(obj, "smoothing", out.smoothing, path, problems);
  out.madr_epsilon = get_double(obj, "madr_epsilon", out.madr_epsilon, path, problems);
  out.ndcg_scale = get_double(obj, "ndcg_scale", out.ndcg_scale, path, problems);
  if (out.k < 1) problems.add(path + ".k", "must be >= 1");
  if (!std::isfinite(out.beta)) problems.add(path + ".beta", "must be finite");
  if (!(out.smoothing >= 0.0)) problems.add(path + ".smoothing", "must be >= 0");
  if (!(out.madr_epsilon > 0.0)) problems.add(path + ".madr_epsilon", "must be > 0");
  if (!(out.ndcg_scale > 0.0)) problems.add(path + ".ndcg_scale", "must be > 0");
  parse_targets(obj, "user_targets", profiling::kUserGroups, out.user_targets, path, problems);
  parse_targets(obj, "item_targets", profiling::kItemGroups, out.item_targets, path, problems);
}

// ---------------------------------------------------------------------------
// canonical serialization

ordered_json dataset_slice(const DatasetConfig& d) {
  ordered_json j;
  j["checkins"] = d.checkins;
  if (d.social) j["social"] = *d.social;
  if (d.categories) j["categories"] = *d.categories;
  j["min_user_checkins"] = d.min_user_checkins;
  j["min_poi_visits"] = d.min_poi_visits;
  j["train_fraction"] = d.train_fraction;
  j["validation_fraction"] = d.validation_fraction;
  j["sample_fraction"] = d.sample_fraction;
  j["sample_seed"] = d.sample_seed;
  return j;
}

ordered_json groups_slice(const GroupConfig& g) {
  ordered_json j;
  j["user_thresholds"] = g.user_thresholds;
  j["item_shares"] = g.item_shares;
  return j;
}

ordered_json metrics_slice(const MetricConfig& m) {
  ordered_json j;
  j["k"] = m.k;
  j["beta"] = m.beta;
  j["smoothing"] = m.smoothing;
  j["madr_epsilon"] = m.madr_epsilon;
  j["ndcg_scale"] = m.ndcg_scale;
  j["user_targets"] = m.user_targets;
  j["item_targets"] = m.item_targets;
  return j;
}

ordered_json model_slice(const ModelConfig& m) {
  ordered_json j;
  j["name"] = m.name;
  j["kind"] = m.kind;
  j["seed"] = m.seed;
  for (const auto& [key, axis] : m.hyperparams) {
    if (axis.size() == 1)
      j[key] = axis[0];
    else
      j[key] = axis;
  }
  if (m.rankings) j["rankings"] = *m.rankings;
  return j;
}

ordered_json experiment_slice(const ExperimentConfig& c) {
  ordered_json j;
  j["dataset"] = dataset_slice(c.dataset);
  j["groups"] = groups_slice(c.groups);
  j["metrics"] = metrics_slice(c.metrics);
  ordered_json models = ordered_json::array();
  for (const ModelConfig& m : c.models) models.push_back(model_slice(m));
  j["models"] = std::move(models);
  return j;
}

// ---------------------------------------------------------------------------
// hyperparameter grid

std::map<std::string, double> default_params(const std::string& kind) {
  if (kind == "bpr") {
    rec::BprParams p;
    return {{"d", double(p.d)},
            {"learning_rate", p.learning_rate},
            {"regularization", p.regularization},
            {"steps_per_interaction", p.steps_per_interaction},
            {"item_bias", p.item_bias ? 1.0 : 0.0}};
  }
  if (kind == "wmf") {
    rec::WmfParams p;
    return {{"d", double(p.d)},
            {"alpha", p.alpha},
            {"regularization", p.regularization},
            {"sweeps", double(p.sweeps)}};
  }
  if (kind == "pf") {
    rec::PfParams p;
    return {{"d", double(p.d)},   {"a", p.a},
            {"b", p.b},           {"c", p.c},
            {"e", p.e},           {"max_iterations", double(p.max_iterations)},
            {"tolerance", p.tolerance}};
  }
  if (kind == "geosoca" || kind == "lore") {
    ctx::ContextualParams p;
    std::map<std::string, double> base{{"floor_km", p.kde.floor_km},
                                       {"adaptivity", p.kde.adaptivity},
                                       {"geo_weight", p.geo_weight},
                                       {"social_weight", p.social_weight}};
    if (kind == "geosoca") {
      base["categorical_weight"] = p.categorical_weight;
    } else {
      base["recency_base"] = p.transitions.recency_base;
      base["sequential_weight"] = p.sequential_weight;
      // max_gap stays absent: no default gap limit
    }
    return base;
  }
  return {};
}

/// Cartesian product over the declared axes in key order, last key varying
/// fastest; keys the config leaves unset take their defaults.
std::vector<std::map<std::string, double>> expand_grid(const ModelConfig& model) {
  const std::map<std::string, double> base = default_params(model.kind);
  std::vector<std::pair<std::string, const std::vector<double>*>> axes;
  for (const auto& [key, values] : model.hyperparams) axes.emplace_back(key, &values);

  std::vector<std::map<std::string, double>> points;
  if (axes.empty()) {
    points.push_back(base);
    return points;
  }
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    std::map<std::string, double> point = base;
    for (std::size_t i = 0; i < axes.size(); ++i) point[axes[i].first] = (*axes[i].second)[idx[i]];
    points.push_back(std::move(point));
    std::size_t i = axes.size() - 1;
    while (true) {
      if (++idx[i] < axes[i].second->size()) break;
      idx[i] = 0;
      if (i == 0) return points;
      --i;
    }
  }
}

rec::BprParams to_bpr(const std::map<std::string, double>& m, std::uint64_t seed) {
  rec::BprParams p;
  p.d = static_cast<int>(m.at("d"));
  p.learning_rate = m.at("learning_rate");
  p.regularization = m.at("regularization");
  p.steps_per_interaction = m.at("steps_per_interaction");
  p.item_bias = m.at("item_bias") != 0.0;
  p.seed = seed;
  return p;
}

rec::WmfParams to_wmf(const std::map<std::string, double>& m, std::uint64_t seed, int threads) {
  rec::WmfParams p;
  p.d = static_cast<int>(m.at("d"));
  p.alpha = m.at("alpha");
  p.regularization = m.at("regularization");
  p.sweeps = static_cast<int>(m.at("sweeps"));
  p.seed = seed;
  p.threads = threads;
  return p;
}

rec::PfParams to_pf(const std::map<std::string, double>& m, std::uint64_t seed) {
  rec::PfParams p;
  p.d = static_cast<int>(m.at("d"));
  p.a = m.at("a");
  p.b = m.at("b");
  p.c = m.at("c");
  p.e = m.at("e");
  p.max_iterations = static_cast<int>(m.at("max_iterations"));
  p.tolerance = m.at("tolerance");
  p.seed = seed;
  return p;
}

ctx::ContextualParams to_contextual(const std::map<std::string, double>& m) {
  ctx::ContextualParams p;
  p.kde.floor_km = m.at("floor_km");
  p.kde.adaptivity = m.at("adaptivity");
  p.geo_weight = m.at("geo_weight");
  p.social_weight = m.at("social_weight");
  if (auto it = m.find("categorical_weight"); it != m.end()) p.categorical_weight = it->second;
  if (auto it = m.find("recency_base"); it != m.end()) p.transitions.recency_base = it->second;
  if (auto it = m.find("sequential_weight"); it != m.end()) p.sequential_weight = it->second;
  if (auto it = m.find("max_gap"); it != m.end())
    p.transitions.max_gap = static_cast<std::int64_t>(it->second);
  return p;
}

bool is_factor_kind(const std::string& kind) {
  return kind == "mostpop" || kind == "bpr" || kind == "wmf" || kind == "pf";
}

bool is_contextual_kind(const std::string& kind) { return kind == "geosoca" || kind == "lore"; }

// ---------------------------------------------------------------------------
// report (de)serialization

ordered_json dist_to_json(const metrics::GroupDistribution& d) {
  ordered_json j;
  j["labels"] = d.labels;
  j["probs"] = d.probs;
  return j;
}

metrics::GroupDistribution dist_from_json(const json& j) {
  metrics::GroupDistribution d;
  d.labels = j.at("labels").get<std::vector<std::string>>();
  d.probs = j.at("probs").get<std::vector<double>>();
  return d;
}

ordered_json opt_to_json(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::optional<double> opt_from_json(const json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

// GCE is -inf when a targeted group has zero model mass; JSON has no
// infinity literal, so -inf round-trips through null.
double gce_from_json(const json& v) {
  if (v.is_null()) return -std::numeric_limits<double>::infinity();
  return v.get<double>();
}

ordered_json perf_to_json(const metrics::GroupPerformance& p) {
  ordered_json j;
  j["metric"] = p.metric;
  j["labels"] = p.labels;
  ordered_json values = ordered_json::array();
  for (const auto& v : p.values) values.push_back(opt_to_json(v));
  j["values"] = std::move(values);
  return j;
}

metrics::GroupPerformance perf_from_json(const json& j) {
  metrics::GroupPerformance p;
  p.metric = j.at("metric").get<std::string>();
  p.labels = j.at("labels").get<std::vector<std::string>>();
  for (const json& v : j.at("values")) p.values.push_back(opt_from_json(v));
  return p;
}

ordered_json model_report_to_json(const metrics::ModelReport& m) {
  ordered_json j;
  j["model"] = m.model;
  j["ndcg"] = m.ndcg;
  j["evaluated_users"] = m.evaluated_users;
  j["excluded_users"] = m.excluded_users;
  j["pm_users"] = dist_to_json(m.pm_users);
  j["pm_users_degenerate"] = m.pm_users_degenerate;
  j["pm_items"] = dist_to_json(m.pm_items);
  j["user_gce"] = m.user_gce;
  j["item_gce"] = m.item_gce;
  j["user_highlight"] = m.user_highlight;
  j["item_highlight"] = m.item_highlight;
  j["user_perf"] = perf_to_json(m.user_perf);
  j["item_perf"] = perf_to_json(m.item_perf);
  j["user_madr"] = opt_to_json(m.user_madr);
  j["user_fairness"] = opt_to_json(m.user_fairness);
  j["item_madr"] = opt_to_json(m.item_madr);
  j["item_fairness"] = opt_to_json(m.item_fairness);
  j["auc_au"] = opt_to_json(m.auc_au);
  j["auc_ai"] = opt_to_json(m.auc_ai);
  j["auc_ui"] = opt_to_json(m.auc_ui);
  return j;
}

metrics::ModelReport model_report_from_json(const json& j) {
  metrics::ModelReport m;
  m.model = j.at("model").get<std::string>();
  m.ndcg = j.at("ndcg").get<double>();
  m.evaluated_users = j.at("evaluated_users").get<std::size_t>();
  m.excluded_users = j.at("excluded_users").get<std::size_t>();
  m.pm_users = dist_from_json(j.at("pm_users"));
  m.pm_users_degenerate = j.at("pm_users_degenerate").get<bool>();
  m.pm_items = dist_from_json(j.at("pm_items"));
  for (const json& v : j.at("user_gce")) m.user_gce.push_back(gce_from_json(v));
  for (const json& v : j.at("item_gce")) m.item_gce.push_back(gce_from_json(v));
  m.user_highlight = j.at("user_highlight").get<std::size_t>();
  m.item_highlight = j.at("item_highlight").get<std::size_t>();
  m.user_perf = perf_from_json(j.at("user_perf"));
  m.item_perf = perf_from_json(j.at("item_perf"));
  m.user_madr = opt_from_json(j.at("user_madr"));
  m.user_fairness = opt_from_json(j.at("user_fairness"));
  m.item_madr = opt_from_json(j.at("item_madr"));
  m.item_fairness = opt_from_json(j.at("item_fairness"));
  m.auc_au = opt_from_json(j.at("auc_au"));
  m.auc_ai = opt_from_json(j.at("auc_ai"));
  m.auc_ui = opt_from_json(j.at("auc_ui"));
  return m;
}

ordered_json report_to_json(const metrics::FairnessReport& r) {
  ordered_json j;
  j["k"] = r.k;
  j["beta"] = r.beta;
  j["smoothing"] = r.smoothing;
  j["ndcg_scale"] = r.ndcg_scale;
  ordered_json ut = ordered_json::array();
  for (const auto& t : r.user_targets) ut.push_back(dist_to_json(t));
  j["user_targets"] = std::move(ut);
  ordered_json it = ordered_json::array();
  for (const auto& t : r.item_targets) it.push_back(dist_to_json(t));
  j["item_targets"] = std::move(it);
  ordered_json models = ordered_json::array();
  for (const auto& m : r.models) models.push_back(model_report_to_json(m));
  j["models"] = std::move(models);
  return j;
}

metrics::FairnessReport report_from_json(const json& j) {
  metrics::FairnessReport r;
  r.k = j.at("k").get<int>();
  r.beta = j.at("beta").get<double>();
  r.smoothing = j.at("smoothing").get<double>();
  r.ndcg_scale = j.at("ndcg_scale").get<double>();
  for (const json& t : j.at("user_targets")) r.user_targets.push_back(dist_from_json(t));
  for (const json& t : j.at("item_targets")) r.item_targets.push_back(dist_from_json(t));
  for (const json& m : j.at("models")) r.models.push_back(model_report_from_json(m));
  return r;
}

// ---------------------------------------------------------------------------
// table, trade-off and annotation builders

struct Column {
  std::string id;
  std::function<std::optional<double>(const metrics::ModelReport&)> get;
};

std::vector<Column> table_columns(const metrics::FairnessReport& r) {
  std::vector<Column> cols;
  cols.push_back({"ndcg", [](const metrics::ModelReport& m) -> std::optional<double> {
                    return m.ndcg;
                  }});
  for (std::size_t i = 0; i < r.user_targets.size(); ++i)
    cols.push_back({"gce_u_pf" + std::to_string(i + 1),
                    [i](const metrics::ModelReport& m) -> std::optional<double> {
                      if (i >= m.user_gce.size()) return std::nullopt;
                      return m.user_gce[i];
                    }});
  cols.push_back({"inv_madr_u",
                  [](const metrics::ModelReport& m) { return m.user_fairness; }});
  for (std::size_t i = 0; i < r.item_targets.size(); ++i)
    cols.push_back({"gce_i_pf" + std::to_string(i + 1),
                    [i](const metrics::ModelReport& m) -> std::optional<double> {
                      if (i >= m.item_gce.size()) return std::nullopt;
                      return m.item_gce[i];
                    }});
  cols.push_back({"inv_madr_i",
                  [](const metrics::ModelReport& m) { return m.item_fairness; }});
  cols.push_back({"auc_au", [](const metrics::ModelReport& m) { return m.auc_au; }});
  cols.push_back({"auc_ai", [](const metrics::ModelReport& m) { return m.auc_ai; }});
  cols.push_back({"auc_ui", [](const metrics::ModelReport& m) { return m.auc_ui; }});
  return cols;
}

struct Marks {
  std::vector<std::string> best, second;
};

/// Every column ranks by maximum: NDCG, 1/MADr and AUC grow with quality,
/// and GCE is <= 0 with 0 ideal, so the maximum is closest to ideal there
/// too. Ties share the mark; a single-model table carries no marks.
std::map<std::string, Marks> annotate(const metrics::FairnessReport& r,
                                      const std::vector<Column>& cols) {
  std::map<std::string, Marks> out;
  if (r.models.size() < 2) return out;
  for (const Column& col : cols) {
    std::vector<std::pair<std::string, double>> vals;
    for (const auto& m : r.models)
      if (auto v = col.get(m)) vals.emplace_back(m.model, *v);
    if (vals.empty()) continue;
    double best = vals[0].second;
    for (const auto& [name, v] : vals) best = std::max(best, v);
    std::optional<double> second;
    for (const auto& [name, v] : vals)
      if (v < best && (!second || v > *second)) second = v;
    Marks marks;
    for (const auto& [name, v] : vals) {
      if (v == best)
        marks.best.push_back(name);
      else if (second && v == *second)
        marks.second.push_back(name);
    }
    out[col.id] = std::move(marks);
  }
  return out;
}

std::string build_table_csv(const metrics::FairnessReport& r) {
  const std::vector<Column> cols = table_columns(r);
  const auto marks = annotate(r, cols);
  std::string out = "model";
  for (const Column& col : cols) out += "," + col.id;
  out += "\n";
  for (const auto& m : r.models) {
    out += m.model;
    for (const Column& col : cols) {
      out += ",";
      const auto v = col.get(m);
      if (!v) continue;
      out += fmt_cell(*v);
      if (auto it = marks.find(col.id); it != marks.end()) {
        const Marks& mk = it->second;
        if (std::find(mk.best.begin(), mk.best.end(), m.model) != mk.best.end())
          out += "*";
        else if (std::find(mk.second.begin(), mk.second.end(), m.model) != mk.second.end())
          out += "**";
      }
    }
    out += "\n";
  }
  return out;
}

std::string build_tradeoff_csv(const metrics::FairnessReport& r) {
  std::string out = "model,pair,x,y,auc\n";
  const auto cell = [](const std::optional<double>& v) { return v ? fmt_full(*v) : std::string(); };
  for (const auto& m : r.models) {
    const double scaled = m.ndcg * r.ndcg_scale;
    out += m.model + ",au," + fmt_full(scaled) + "," + cell(m.user_fairness) + "," +
           cell(m.auc_au) + "\n";
    out += m.model + ",ai," + fmt_full(scaled) + "," + cell(m.item_fairness) + "," +
           cell(m.auc_ai) + "\n";
    out += m.model + ",ui," + cell(m.user_fairness) + "," + cell(m.item_fairness) + "," +
           cell(m.auc_ui) + "\n";
  }
  return out;
}

std::string build_report_json(const metrics::FairnessReport& r, const std::string& hash) {
  ordered_json j;
  j["version"] = kToolkitVersion;
  j["config_hash"] = hash;
  const ordered_json body = report_to_json(r);
  for (const auto& item : body.items()) j[item.key()] = item.value();
  ordered_json ann = ordered_json::object();
  const auto cols = table_columns(r);
  for (const auto& [col, marks] : annotate(r, cols)) {
    ordered_json entry;
    entry["best"] = marks.best;
    if (!marks.second.empty()) entry["second"] = marks.second;
    ann[col] = std::move(entry);
  }
  j["annotations"] = std::move(ann);
  return j.dump(2) + "\n";
}

std::string build_manifest_json(const RunManifest& manifest) {
  ordered_json j;
  j["config_hash"] = manifest.config_hash;
  j["version"] = manifest.version;
  ordered_json stages = ordered_json::array();
  for (const StageRecord& rec : manifest.stages) {
    ordered_json s;
    s["stage"] = rec.stage;
    s["inputs"] = rec.inputs_digest;
    ordered_json arts = ordered_json::array();
    for (const auto& [path, digest] : rec.artifacts) {
      ordered_json a;
      a["path"] = path;
      a["sha256"] = digest;
      arts.push_back(std::move(a));
    }
    s["artifacts"] = std::move(arts);
    stages.push_back(std::move(s));
  }
  j["stages"] = std::move(stages);
  return j.dump(2) + "\n";
}

std::string build_timings_json(const RunManifest& manifest) {
  ordered_json j;
  ordered_json stages = ordered_json::array();
  for (const StageRecord& rec : manifest.stages) {
    ordered_json s;
    s["stage"] = rec.stage;
    s["cached"] = rec.cached;
    s["ms"] = rec.elapsed_ms;
    stages.push_back(std::move(s));
  }
  j["stages"] = std::move(stages);
  return j.dump(2) + "\n";
}

void probe_writable(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("output directory not writable: " + dir.string() + " (" + ec.message() + ")");
  const fs::path probe = dir / ".write_probe";
  try {
    util::atomic_write_file(probe, "");
  } catch (const DataError&) {
    throw DataError("output directory not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

// ---------------------------------------------------------------------------
// the pipeline runner

using Artifact = std::pair<std::string, std::string>;  // relative path, sha256

struct PrevStage {
  std::string inputs_digest;
  std::vector<Artifact> artifacts;
};

std::map<std::string, PrevStage> load_prev_manifest(const fs::path& path) {
  std::map<std::string, PrevStage> prev;
  std::error_code ec;
  if (!fs::exists(path, ec)) return prev;
  try {
    const json j = json::parse(util::read_file(path));
    for (const json& s : j.at("stages")) {
      PrevStage stage;
      stage.inputs_digest = s.at("inputs").get<std::string>();
      for (const json& a : s.at("artifacts"))
        stage.artifacts.emplace_back(a.at("path").get<std::string>(),
                                     a.at("sha256").get<std::string>());
      prev[s.at("stage").get<std::string>()] = std::move(stage);
    }
  } catch (const std::exception&) {
    prev.clear();  // unreadable manifest: recompute everything
  }
  return prev;
}

double validation_ndcg(const std::vector<RankedSlate>& slates, const InteractionStore& store,
                       int k, std::size_t* users_out) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const RankedSlate& slate : slates) {
    const auto& valid = store.split[static_cast<std::size_t>(slate.user)].validation;
    if (valid.empty()) continue;
    sum += metrics::ndcg_at_k(slate, valid, k);
    ++n;
  }
  if (users_out) *users_out = n;
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

class Runner {
 public:
  Runner(const ExperimentConfig& config, const StageSelection& selection)
      : cfg_(config), sel_(selection) {}

  RunResult execute() {
    out_ = resolve(cfg_.base_dir, cfg_.output_dir);
    probe_writable(out_);
    prev_ = load_prev_manifest(out_ / "manifest.json");
    manifest_.config_hash = config_hash(cfg_);

    run_prep();
    store_ = dataset::load_store(out_ / "store.bin");
    if (sel_.upto >= Stage::analyze) run_analyze();
    for (const ModelConfig& model : cfg_.models) {
      if (sel_.model && (sel_.upto == Stage::train || sel_.upto == Stage::recommend) &&
          *sel_.model != model.name)
        continue;
      if (sel_.upto >= Stage::train && model.kind != "external") run_train(model);
      if (sel_.upto >= Stage::recommend) run_recommend(model);
    }
    std::optional<metrics::FairnessReport> report;
    if (sel_.upto >= Stage::evaluate) {
      run_evaluate();
      report = parse_report(util::read_file(out_ / "evaluation.json"));
      if (sel_.upto >= Stage::report) run_report(*report);
    }
    util::atomic_write_file(out_ / "timings.json", build_timings_json(manifest_));
    return {std::move(report), std::move(manifest_)};
  }

 private:
  Artifact art(const std::string& rel) const { return {rel, sha256_file(out_ / rel)}; }

  bool cache_hit(const std::string& stage, const std::string& inputs,
                 std::vector<Artifact>* artifacts) const {
    const auto it = prev_.find(stage);
    if (it == prev_.end() || it->second.inputs_digest != inputs) return false;
    try {
      for (const auto& [rel, digest] : it->second.artifacts) {
        std::error_code ec;
        const fs::path path = out_ / rel;
        if (!fs::exists(path, ec)) return false;
        if (sha256_file(path) != digest) return false;
      }
    } catch (const std::exception&) {
      return false;  // unreadable artifact: recompute
    }
    *artifacts = it->second.artifacts;
    return true;
  }

  void execute_stage(const std::string& name, bool force,
                     const std::function<std::string()>& inputs_fn,
                     const std::function<std::vector<Artifact>()>& body) {
    StageRecord record;
    record.stage = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      record.inputs_digest = inputs_fn();
      std::vector<Artifact> artifacts;
      if (!force && cache_hit(name, record.inputs_digest, &artifacts)) {
        record.cached = true;
        record.artifacts = std::move(artifacts);
      } else {
        record.artifacts = body();
      }
    } catch (const ConfigError& e) {
      throw ConfigError("stage " + name + " failed: " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("stage " + name + " failed: " + e.what());
    } catch (const std::exception& e) {
      throw DataError("stage " + name + " failed: " + e.what());
    }
    record.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& [rel, digest] : record.artifacts) digests_[rel] = digest;
    manifest_.stages.push_back(std::move(record));
    util::atomic_write_file(out_ / "manifest.json", build_manifest_json(manifest_));
  }

  static std::string digest_of(std::initializer_list<std::string_view> parts) {
    util::Sha256 h;
    for (const auto& part : parts) {
      h.update(part.data(), part.size());
      h.update("|", 1);
    }
    return h.hex_digest();
  }

  std::string stored_digest(const std::string& rel) const {
    const auto it = digests_.find(rel);
    if (it == digests_.end())
      throw DataError("internal: no recorded digest for artifact " + rel);
    return it->second;
  }

  void run_prep() {
    const DatasetConfig& d = cfg_.dataset;
    const fs::path checkins = resolve(cfg_.base_dir, d.checkins);
    std::optional<fs::path> social, categories;
    if (d.social) social = resolve(cfg_.base_dir, *d.social);
    if (d.categories) categories = resolve(cfg_.base_dir, *d.categories);

    // keyed on file contents rather than paths, so relocated-but-identical
    // data still hits the cache
    const auto inputs = [&]() -> std::string {
      ordered_json slice = dataset_slice(d);
      slice.erase("checkins");
      slice.erase("social");
      slice.erase("categories");
      return digest_of({slice.dump(), sha256_file(checkins),
                        social ? sha256_file(*social) : std::string("absent"),
                        categories ? sha256_file(*categories) : std::string("absent")});
    };

    execute_stage("prep", false, inputs, [&]() -> std::vector<Artifact> {
      const RawDataset raw = dataset::ingest(checkins, social, categories);
      InteractionStore store = dataset::preprocess(raw, d.min_user_checkins, d.min_poi_visits);
      if (d.sample_fraction < 1.0)
        store = dataset::sample_users(store, d.sample_fraction, d.sample_seed);
      store = dataset::temporal_split(std::move(store), d.train_fraction, d.validation_fraction);
      dataset::save_store(store, out_ / "store.bin");
      dataset::export_index_maps(store, out_);
      return {art("store.bin"), art("user_index.csv"), art("poi_index.csv")};
    });
  }

  void run_analyze() {
    const auto inputs = [&] {
      return digest_of({groups_slice(cfg_.groups).dump(), stored_digest("store.bin")});
    };
    execute_stage("analyze", false, inputs, [&]() -> std::vector<Artifact> {
      const auto scheme = profiling::build_scheme(store_, cfg_.groups.user_thresholds,
                                                  cfg_.groups.item_shares);
      const auto stats = profiling::profile_popularity(store_, scheme);
      profiling::write_analysis_outputs(store_, scheme, stats, out_);
      return {art("longtail.csv"), art("profile_stats.csv"), art("groups.csv"),
              art("analysis.json")};
    });
  }

  rec::FactorModel train_factor(const ModelConfig& model,
                                const std::map<std::string, double>& point) const {
    if (model.kind == "mostpop") return rec::train_mostpop(store_);
    if (model.kind == "bpr") return rec::train_bpr(store_, to_bpr(point, model.seed));
    if (model.kind == "wmf")
      return rec::train_wmf(store_, to_wmf(point, model.seed, cfg_.threads));
    return rec::train_pf(store_, to_pf(point, model.seed));
  }

  ctx::ContextualModel build_contextual(const ModelConfig& model,
                                        const std::map<std::string, double>& point) const {
    const ctx::ContextualParams params = to_contextual(point);
    return model.kind == "geosoca" ? ctx::build_geosoca(store_, params)
                                   : ctx::build_lore(store_, params);
  }

  void run_train(const ModelConfig& model) {
    const std::string stage = "train:" + model.name;
    const std::string selection_file = "selection_" + model.name + ".json";
    const std::string model_file = "model_" + model.name + ".bin";
    const auto inputs = [&] {
      return digest_of(
          {model_slice(model).dump(), stored_digest("store.bin"), std::to_string(cfg_.metrics.k)});
    };

    execute_stage(stage, false, inputs, [&]() -> std::vector<Artifact> {
      const auto grid = expand_grid(model);
      const int k = cfg_.metrics.k;

      json candidates = json::array();
      std::size_t best_index = 0;
      double best_score = -1.0;
      std::optional<rec::FactorModel> best_model;
      std::size_t validation_users = 0;

      for (std::size_t i = 0; i < grid.size(); ++i) {
        double score = 0.0;
        if (is_factor_kind(model.kind)) {
          rec::FactorModel fm = train_factor(model, grid[i]);
          const auto slates =
              rec::recommend(fm, store_, k, rec::ExcludeMode::train_only, cfg_.threads);
          score = validation_ndcg(slates, store_, k, &validation_users);
          if (!best_model || score > best_score) best_model = std::move(fm);
        } else {
          const ctx::ContextualModel cm = build_contextual(model, grid[i]);
          const auto fused = ctx::fuse(cm, store_, k, rec::ExcludeMode::train_only, cfg_.threads);
          score = validation_ndcg(fused.slates, store_, k, &validation_users);
        }
        if (score > best_score) {
          best_score = score;
          best_index = i;
        }
        candidates.push_back({{"params", grid[i]}, {"validation_ndcg", score}});
      }

      json selection;
      selection["model"] = model.name;
      selection["kind"] = model.kind;
      selection["seed"] = model.seed;
      selection["validation_users"] = validation_users;
      selection["candidates"] = std::move(candidates);
      selection["selected_index"] = best_index;
      selection["selected"] = grid[best_index];
      util::atomic_write_file(out_ / selection_file, selection.dump(2) + "\n");

      std::vector<Artifact> artifacts{art(selection_file)};
      if (is_factor_kind(model.kind)) {
        rec::save_model(*best_model, out_ / model_file);
        artifacts.push_back(art(model_file));
      }
      return artifacts;
    });
  }

  std::map<std::string, double> load_selected_params(const std::string& selection_file) const {
    try {
      const json j = json::parse(util::read_file(out_ / selection_file));
      return j.at("selected").get<std::map<std::string, double>>();
    } catch (const std::exception& e) {
      throw DataError("corrupt selection file " + selection_file + ": " + e.what());
    }
  }

  void write_components_csv(const ModelConfig& model, const ctx::ContextualModel& cm,
                            const ctx::FuseResult& fused) const {
    std::string out = "user_id,poi_id,rank,score,geo,social,categorical,sequential,fallback\n";
    char buf[64];
    const auto num = [&buf](double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    for (const RankedSlate& slate : fused.slates) {
      const std::size_t u = static_cast<std::size_t>(slate.user);
      const bool fallback = fused.empty_information[u];
      for (std::size_t r = 0; r < slate.entries.size(); ++r) {
        const SlateEntry& entry = slate.entries[r];
        const auto cs = ctx::component_scores(cm, store_, slate.user, entry.poi);
        out += store_.user_ids[u] + "," +
               store_.poi_ids[static_cast<std::size_t>(entry.poi)] + "," + std::to_string(r + 1) +
               "," + num(entry.score) + "," + num(cs.geo) + "," + num(cs.social) + "," +
               num(cs.categorical) + "," + num(cs.sequential) + "," + (fallback ? "1" : "0") +
               "\n";
      }
    }
    util::atomic_write_file(out_ / ("components_" + model.name + ".csv"), out);
  }

  void run_recommend(const ModelConfig& model) {
    const std::string stage = "recommend:" + model.name;
    const std::string rankings_file = "rankings_" + model.name + ".csv";
    const std::string selection_file = "selection_" + model.name + ".json";
    const std::string model_file = "model_" + model.name + ".bin";
    const int k = cfg_.metrics.k;

    if (model.kind == "external") {
      const fs::path source = resolve(cfg_.base_dir, *model.rankings);
      const auto inputs = [&] {
        return digest_of(
            {"external", sha256_file(source), stored_digest("store.bin"), std::to_string(k)});
      };
      execute_stage(stage, false, inputs, [&]() -> std::vector<Artifact> {
        std::vector<RankedSlate> slates = rec::import_external_rankings(source, store_);
        // normalize to the shared protocol: train/validation items out,
        // at most k entries, ranks renumbered by the re-export
        for (RankedSlate& slate : slates) {
          const auto& split = store_.split[static_cast<std::size_t>(slate.user)];
          std::erase_if(slate.entries, [&](const SlateEntry& e) {
            return std::binary_search(split.train.begin(), split.train.end(), e.poi) ||
                   std::binary_search(split.validation.begin(), split.validation.end(), e.poi);
          });
          if (slate.entries.size() > static_cast<std::size_t>(k))
            slate.entries.resize(static_cast<std::size_t>(k));
        }
        rec::export_rankings(slates, store_, out_ / rankings_file);
        return {art(rankings_file)};
      });
      return;
    }

    const bool dump = sel_.dump_components && is_contextual_kind(model.kind) &&
                      (!sel_.model || *sel_.model == model.name);
    const auto inputs = [&] {
      std::string src = "internal|" + stored_digest(selection_file);
      if (is_factor_kind(model.kind)) src += "|" + stored_digest(model_file);
      return digest_of({src, stored_digest("store.bin"), std::to_string(k)});
    };

    execute_stage(stage, dump, inputs, [&]() -> std::vector<Artifact> {
      const auto params = load_selected_params(selection_file);
      std::vector<RankedSlate> slates;
      if (is_factor_kind(model.kind)) {
        const rec::FactorModel fm = rec::load_model(out_ / model_file);
        slates = rec::recommend(fm, store_, k, rec::ExcludeMode::train_and_validation,
                                cfg_.threads);
      } else {
        const ctx::ContextualModel cm = build_contextual(model, params);
        ctx::FuseResult fused =
            ctx::fuse(cm, store_, k, rec::ExcludeMode::train_and_validation, cfg_.threads);
        if (dump) write_components_csv(model, cm, fused);
        slates = std::move(fused.slates);
      }
      rec::export_rankings(slates, store_, out_ / rankings_file);
      return {art(rankings_file)};
    });
  }

  metrics::MetricParams metric_params() const {
    metrics::MetricParams params;
    params.k = cfg_.metrics.k;
    params.gce.beta = cfg_.metrics.beta;
    params.gce.smoothing = cfg_.metrics.smoothing;
    params.madr_epsilon = cfg_.metrics.madr_epsilon;
    params.ndcg_scale = cfg_.metrics.ndcg_scale;
    const std::vector<std::string> user_labels = {"very-inactive", "slightly-inactive",
                                                  "slightly-active", "very-active"};
    const std::vector<std::string> item_labels = {"short-head", "mid-tail", "long-tail"};
    for (const auto& probs : cfg_.metrics.user_targets)
      params.user_targets.push_back({user_labels, probs});
    for (const auto& probs : cfg_.metrics.item_targets)
      params.item_targets.push_back({item_labels, probs});
    return params;
  }

  void run_evaluate() {
    const auto inputs = [&] {
      util::Sha256 h;
      h.update(metrics_slice(cfg_.metrics).dump());
      h.update("|");
      h.update(groups_slice(cfg_.groups).dump());
      h.update("|");
      h.update(stored_digest("store.bin"));
      for (const ModelConfig& model : cfg_.models) {
        h.update("|" + model.name + "=");
        h.update(stored_digest("rankings_" + model.name + ".csv"));
      }
      return h.hex_digest();
    };
    execute_stage("evaluate", false, inputs, [&]() -> std::vector<Artifact> {
      const auto scheme = profiling::build_scheme(store_, cfg_.groups.user_thresholds,
                                                  cfg_.groups.item_shares);
      // slates always come back from the rankings artifacts, so cached and
      // freshly computed recommend stages feed evaluation identical bytes
      std::vector<std::vector<RankedSlate>> all_slates;
      all_slates.reserve(cfg_.models.size());
      std::vector<std::pair<std::string, const std::vector<RankedSlate>*>> model_slates;
      for (const ModelConfig& model : cfg_.models)
        all_slates.push_back(rec::import_external_rankings(
            out_ / ("rankings_" + model.name + ".csv"), store_));
      for (std::size_t i = 0; i < cfg_.models.size(); ++i)
        model_slates.emplace_back(cfg_.models[i].name, &all_slates[i]);
      const auto report = metrics::build_report(model_slates, store_, scheme, metric_params());
      util::atomic_write_file(out_ / "evaluation.json", serialize_report(report));
      return {art("evaluation.json")};
    });
  }

  void run_report(const metrics::FairnessReport& report) {
    const auto inputs = [&] { return digest_of({stored_digest("evaluation.json")}); };
    execute_stage("report", false, inputs, [&]() -> std::vector<Artifact> {
      util::atomic_write_file(out_ / "report.json",
                              build_report_json(report, manifest_.config_hash));
      util::atomic_write_file(out_ / "table.csv", build_table_csv(report));
      util::atomic_write_file(out_ / "tradeoff.csv", build_tradeoff_csv(report));
      return {art("report.json"), art("table.csv"), art("tradeoff.csv")};
    });
  }

  const ExperimentConfig& cfg_;
  const StageSelection& sel_;
  fs::path out_;
  std::map<std::string, PrevStage> prev_;
  std::map<std::string, std::string> digests_;
  RunManifest manifest_;
  InteractionStore store_;
};

}  // namespace

// ---------------------------------------------------------------------------
// public API

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");

  Problems problems;
  ExperimentConfig config;
  check_unknown_keys(root, {"dataset", "groups", "metrics", "models", "output_dir", "threads"},
                     "", problems);

  if (!root.contains("dataset"))
    problems.add("dataset", "required section");
  else
    parse_dataset(root.at("dataset"), config.dataset, problems);
  if (root.contains("groups")) parse_groups(root.at("groups"), config.groups, problems);
  if (root.contains("metrics")) parse_metrics(root.at("metrics"), config.metrics, problems);

  if (root.contains("models")) {
    const json& models = root.at("models");
    if (!models.is_array()) {
      problems.add("models", "expected a list of model objects");
    } else {
      for (std::size_t i = 0; i < models.size(); ++i)
        config.models.push_back(parse_model(models[i], i, problems));
      std::vector<std::string> seen;
      for (const ModelConfig& m : config.models) {
        if (m.name.empty()) continue;
        if (std::find(seen.begin(), seen.end(), m.name) != seen.end())
          problems.add(m.name, "duplicate model name");
        seen.push_back(m.name);
      }
    }
  }

  config.output_dir = get_string(root, "output_dir", config.output_dir, "", problems);
  if (config.output_dir.empty()) problems.add("output_dir", "must not be empty");
  config.threads = get_int(root, "threads", config.threads, "", problems);
  if (config.threads < 1) problems.add("threads", "must be >= 1");

  problems.raise_if_any();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = util::read_file(path);
  } catch (const std::exception& e) {
    // an unreadable config is a configuration problem, not a data problem
    throw ConfigError(e.what());
  }
  ExperimentConfig config = parse_config(text);
  config.base_dir = fs::absolute(path).parent_path();
  return config;
}

std::string serialize_config(const ExperimentConfig& config) {
  ordered_json j = experiment_slice(config);
  j["output_dir"] = config.output_dir;
  j["threads"] = config.threads;
  return j.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
  return util::Sha256::of(experiment_slice(config).dump());
}

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::prep: return "prep";
    case Stage::analyze: return "analyze";
    case Stage::train: return "train";
    case Stage::recommend: return "recommend";
    case Stage::evaluate: return "evaluate";
    case Stage::report: return "report";
  }
  return "?";
}

std::string serialize_report(const metrics::FairnessReport& report) {
  return report_to_json(report).dump(2) + "\n";
}

metrics::FairnessReport parse_report(const std::string& json_text) {
  try {
    return report_from_json(json::parse(json_text));
  } catch (const std::exception& e) {
    throw DataError(std::string("corrupt evaluation report: ") + e.what());
  }
}

RunResult run(const ExperimentConfig& config, const StageSelection& selection) {
  if (selection.model) {
    if (selection.upto != Stage::train && selection.upto != Stage::recommend)
      throw ConfigError("a model filter applies only to the train and recommend stages");
    const auto it = std::find_if(config.models.begin(), config.models.end(),
                                 [&](const ModelConfig& m) { return m.name == *selection.model; });
    if (it == config.models.end())
      throw ConfigError("stage selection names unknown model \"" + *selection.model + "\"");
  }
  Runner runner(config, selection);
  return runner.execute();
}

void emit_report(const metrics::FairnessReport& report, const RunManifest& manifest,
                 const std::filesystem::path& outdir) {
  probe_writable(outdir);
  util::atomic_write_file(outdir / "report.json",
                          build_report_json(report, manifest.config_hash));
  util::atomic_write_file(outdir / "table.csv", build_table_csv(report));
  util::atomic_write_file(outdir / "tradeoff.csv", build_tradeoff_csv(report));
  util::atomic_write_file(outdir / "manifest.json", build_manifest_json(manifest));
  util::atomic_write_file(outdir / "timings.json", build_timings_json(manifest));
}

}  // namespace poibench::harness
