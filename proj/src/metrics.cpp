#include "poibench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "poibench/errors.hpp"

namespace poibench::metrics {

void validate(const GroupDistribution& dist) {
  if (dist.labels.size() != dist.probs.size())
    throw ConfigError("distribution labels and probabilities disagree in length");
  if (dist.probs.empty()) throw ConfigError("empty distribution");
  double sum = 0;
  for (const double p : dist.probs) {
    if (!(p >= 0.0)) throw ConfigError("distribution probabilities must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << "distribution probabilities sum to " << sum << ", expected 1";
    throw ConfigError(msg.str());
  }
}

double ndcg_at_k(const RankedSlate& slate, const std::vector<PoiIdx>& test_items, int k) {
  if (k < 1) throw ConfigError("ndcg k must be >= 1");
  if (test_items.empty()) return 0.0;
  const std::size_t depth = std::min<std::size_t>(slate.entries.size(), static_cast<std::size_t>(k));
  double dcg = 0;
  for (std::size_t i = 0; i < depth; ++i) {
    if (std::binary_search(test_items.begin(), test_items.end(), slate.entries[i].poi))
      dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  const std::size_t ideal = std::min<std::size_t>(static_cast<std::size_t>(k), test_items.size());
  double idcg = 0;
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

PmUsersResult estimate_pm_users(const std::vector<RankedSlate>& slates,
                                const InteractionStore& store,
                                const profiling::GroupScheme& scheme, int k) {
  PmUsersResult result;
  std::vector<double> mass(profiling::kUserGroups, 0.0);
  double total = 0;
  for (const RankedSlate& slate : slates) {
    const auto u = static_cast<std::size_t>(slate.user);
    const auto& test = store.split[u].test;
    if (test.empty()) continue;
    const double v = ndcg_at_k(slate, test, k);
    mass[static_cast<std::size_t>(scheme.user_group[u])] += v;
    total += v;
  }
  for (std::size_t g = 0; g < profiling::kUserGroups; ++g)
    result.dist.labels.emplace_back(profiling::label(static_cast<profiling::UserGroup>(g)));
  if (total <= 0.0) {
    result.degenerate = true;
    result.dist.probs.assign(profiling::kUserGroups, 1.0 / profiling::kUserGroups);
  } else {
    for (const double m : mass) result.dist.probs.push_back(m / total);
  }
  return result;
}

GroupDistribution estimate_pm_items(const std::vector<RankedSlate>& slates,
                                    const profiling::GroupScheme& scheme, double smoothing) {
  if (smoothing < 0.0) throw ConfigError("smoothing must be >= 0");
  GroupDistribution dist;
  std::vector<double> slots(profiling::kItemGroups, 0.0);
  double total = 0;
  for (const RankedSlate& slate : slates) {
    for (const SlateEntry& e : slate.entries) {
      slots[static_cast<std::size_t>(scheme.item_group[static_cast<std::size_t>(e.poi)])] += 1.0;
      total += 1.0;
    }
  }
  total += smoothing * profiling::kItemGroups;
  if (total <= 0.0) throw DataError("no slate slots and no smoothing: item pm undefined");
  for (std::size_t g = 0; g < profiling::kItemGroups; ++g) {
    dist.labels.emplace_back(profiling::label(static_cast<profiling::ItemGroup>(g)));
    dist.probs.push_back((smoothing + slots[g]) / total);
  }
  return dist;
}

double gce(const GroupDistribution& pf, const GroupDistribution& pm, const GceParams& params) {
  validate(pf);
  validate(pm);
  if (pf.probs.size() != pm.probs.size())
    throw ConfigError("pf and pm must have the same number of groups");
  if (pf.probs == pm.probs) return 0.0;

  const double beta = params.beta;
  const double tol = params.limit_tolerance;
  if (!std::isfinite(beta)) throw ConfigError("beta must be finite");

  const std::size_t n = pf.probs.size();
  if (std::abs(beta - 1.0) < tol) {
    // beta -> 1 limit: -KL(pf || pm)
    double kl = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (pf.probs[j] == 0.0) continue;
      if (pm.probs[j] == 0.0)
        throw NumericError("GCE diverges: pm has a zero group under beta near 1");
      kl += pf.probs[j] * std::log(pf.probs[j] / pm.probs[j]);
    }
    return -kl;
  }
  if (std::abs(beta) < tol) {
    // beta -> 0 limit: -KL(pm || pf)
    double kl = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (pm.probs[j] == 0.0) continue;
      if (pf.probs[j] == 0.0)
        throw NumericError("GCE diverges: pf has a zero group under beta near 0");
      kl += pm.probs[j] * std::log(pm.probs[j] / pf.probs[j]);
    }
    return -kl;
  }

  double sum = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double f = pf.probs[j];
    const double m = pm.probs[j];
    if (f == 0.0 && m == 0.0) continue;
    if (m == 0.0 && beta > 1.0)
      throw NumericError("GCE diverges: pm has a zero group under beta > 1 (add smoothing)");
    if (f == 0.0 && beta < 0.0)
      throw NumericError("GCE diverges: pf has a zero group under beta < 0");
    if (m == 0.0 && beta < 0.0) continue;  // m^(1-beta) with 1-beta > 1: term is 0
    if (f == 0.0 && beta > 0.0) continue;
    sum += std::pow(f, beta) * std::pow(m, 1.0 - beta);
  }
  return (sum - 1.0) / (beta * (1.0 - beta));
}

MadrResult madr(const GroupPerformance& perf, double epsilon) {
  if (perf.values.size() < 2) throw ConfigError("madr needs at least 2 groups");
  std::vector<double> vals;
  for (const auto& v : perf.values)
    if (v.has_value()) vals.push_back(*v);
  MadrResult result;
  if (vals.size() < 2) return result;  // undefined, reported as such
  double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    for (std::size_t j = i + 1; j < vals.size(); ++j) {
      sum += std::abs(vals[i] - vals[j]);
      ++pairs;
    }
  }
  result.madr = sum / static_cast<double>(pairs);
  result.fairness = 1.0 / (*result.madr + epsilon);
  return result;
}

GroupPerformance group_performance(const std::vector<RankedSlate>& slates,
                                   const InteractionStore& store,
                                   const profiling::GroupScheme& scheme, Side side, int k) {
  GroupPerformance perf;
  if (side == Side::user) {
    perf.metric = "ndcg@" + std::to_string(k);
    std::vector<double> sum(profiling::kUserGroups, 0.0);
    std::vector<std::size_t> count(profiling::kUserGroups, 0);
    for (const RankedSlate& slate : slates) {
      const auto u = static_cast<std::size_t>(slate.user);
      const auto& test = store.split[u].test;
      if (test.empty()) continue;
      const auto g = static_cast<std::size_t>(scheme.user_group[u]);
      sum[g] += ndcg_at_k(slate, test, k);
      ++count[g];
    }
    for (std::size_t g = 0; g < profiling::kUserGroups; ++g) {
      perf.labels.emplace_back(profiling::label(static_cast<profiling::UserGroup>(g)));
      if (count[g] > 0) {
        perf.values.emplace_back(sum[g] / static_cast<double>(count[g]));
      } else {
        perf.values.emplace_back(std::nullopt);
      }
    }
  } else {
    perf.metric = "exposure";
    std::vector<double> slots(profiling::kItemGroups, 0.0);
    std::vector<std::size_t> catalog(profiling::kItemGroups, 0);
    for (const profiling::ItemGroup g : scheme.item_group)
      ++catalog[static_cast<std::size_t>(g)];
    double total = 0;
    for (const RankedSlate& slate : slates) {
      for (const SlateEntry& e : slate.entries) {
        slots[static_cast<std::size_t>(scheme.item_group[static_cast<std::size_t>(e.poi)])] += 1.0;
        total += 1.0;
      }
    }
    for (std::size_t g = 0; g < profiling::kItemGroups; ++g) {
      perf.labels.emplace_back(profiling::label(static_cast<profiling::ItemGroup>(g)));
      if (catalog[g] == 0) {
        perf.values.emplace_back(std::nullopt);  // tier absent from the catalog
      } else {
        perf.values.emplace_back(total > 0 ? slots[g] / total : 0.0);
      }
    }
  }
  return perf;
}

double tradeoff_auc(double x, double y) {
  if (x < 0.0 || y < 0.0) throw ConfigError("tradeoff_auc expects non-negative coordinates");
  return x * y / 2.0;
}

std::vector<GroupDistribution> default_user_targets() {
  const std::vector<std::string> labels = {"very-inactive", "slightly-inactive",
                                           "slightly-active", "very-active"};
  std::vector<GroupDistribution> targets;
  targets.push_back({labels, {0.25, 0.25, 0.25, 0.25}});
  for (std::size_t spike = 0; spike < 4; ++spike) {
    std::vector<double> probs(4, 0.1);
    probs[spike] = 0.7;
    targets.push_back({labels, probs});
  }
  return targets;
}

std::vector<GroupDistribution> default_item_targets() {
  const std::vector<std::string> labels = {"short-head", "mid-tail", "long-tail"};
  std::vector<GroupDistribution> targets;
  targets.push_back({labels, {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}});
  for (std::size_t spike = 0; spike < 3; ++spike) {
    std::vector<double> probs(3, 0.15);
    probs[spike] = 0.7;
    targets.push_back({labels, probs});
  }
  return targets;
}

namespace {

std::size_t argmin_abs(const std::vector<double>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (std::abs(values[i]) < std::abs(values[best])) best = i;
  return best;
}

}  // namespace

ModelReport evaluate_model(const std::string& name, const std::vector<RankedSlate>& slates,
                           const InteractionStore& store, const profiling::GroupScheme& scheme,
                           const MetricParams& params) {
  if (!store.has_split) throw DataError("evaluation requires a split store");
  ModelReport report;
  report.model = name;

  double sum = 0;
  for (const RankedSlate& slate : slates) {
    const auto& test = store.split[static_cast<std::size_t>(slate.user)].test;
    if (test.empty()) {
      ++report.excluded_users;
      continue;
    }
    sum += ndcg_at_k(slate, test, params.k);
    ++report.evaluated_users;
  }
  report.ndcg = report.evaluated_users > 0 ? sum / static_cast<double>(report.evaluated_users) : 0.0;

  const auto pm_users = estimate_pm_users(slates, store, scheme, params.k);
  report.pm_users = pm_users.dist;
  report.pm_users_degenerate = pm_users.degenerate;
  report.pm_items = estimate_pm_items(slates, scheme, params.gce.smoothing);

  const auto user_targets =
      params.user_targets.empty() ? default_user_targets() : params.user_targets;
  const auto item_targets =
      params.item_targets.empty() ? default_item_targets() : params.item_targets;
  for (const auto& pf : user_targets) report.user_gce.push_back(gce(pf, report.pm_users, params.gce));
  for (const auto& pf : item_targets) report.item_gce.push_back(gce(pf, report.pm_items, params.gce));
  report.user_highlight = argmin_abs(report.user_gce);
  report.item_highlight = argmin_abs(report.item_gce);

  report.user_perf = group_performance(slates, store, scheme, Side::user, params.k);
  report.item_perf = group_performance(slates, store, scheme, Side::item, params.k);
  const auto user_madr = madr(report.user_perf, params.madr_epsilon);
  const auto item_madr = madr(report.item_perf, params.madr_epsilon);
  report.user_madr = user_madr.madr;
  report.user_fairness = user_madr.fairness;
  report.item_madr = item_madr.madr;
  report.item_fairness = item_madr.fairness;

  if (report.user_fairness)
    report.auc_au = tradeoff_auc(report.ndcg * params.ndcg_scale, *report.user_fairness);
  if (report.item_fairness)
    report.auc_ai = tradeoff_auc(report.ndcg * params.ndcg_scale, *report.item_fairness);
  if (report.user_fairness && report.item_fairness)
    report.auc_ui = tradeoff_auc(*report.user_fairness, *report.item_fairness);
  return report;
}

FairnessReport build_report(
    const std::vector<std::pair<std::string, const std::vector<RankedSlate>*>>& model_slates,
    const InteractionStore& store, const profiling::GroupScheme& scheme,
    const MetricParams& params) {
  FairnessReport report;
  report.k = params.k;
  report.beta = params.gce.beta;
  report.smoothing = params.gce.smoothing;
  report.ndcg_scale = params.ndcg_scale;
  report.user_targets = params.user_targets.empty() ? default_user_targets() : params.user_targets;
  report.item_targets = params.item_targets.empty() ? default_item_targets() : params.item_targets;
  for (const auto& t : report.user_targets) validate(t);
  for (const auto& t : report.item_targets) validate(t);
  for (const auto& [name, slates] : model_slates)
    report.models.push_back(evaluate_model(name, *slates, store, scheme, params));
  return report;
}

}  // namespace poibench::metrics
