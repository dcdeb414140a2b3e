#pragma once

#include <optional>
#include <string>
#include <vector>

#include "poibench/profiling.hpp"
#include "poibench/types.hpp"

namespace poibench::metrics {

struct GroupDistribution {
  std::vector<std::string> labels;
  std::vector<double> probs;
};

/// Throws if probs are negative, do not sum to 1 within 1e-9, or disagree
/// with the label count.
void validate(const GroupDistribution& dist);

struct GceParams {
  double beta = 0.5;
  double limit_tolerance = 1e-9;
  double smoothing = 1.0;  // pseudo-count per group for the item-side pm
};

struct GroupPerformance {
  std::string metric;
  std::vector<std::string> labels;
  std::vector<std::optional<double>> values;  // nullopt: group empty, excluded from pairing
};

enum class Side { user, item };

/// Binary-relevance NDCG over the first k slate positions. Callers are
/// responsible for excluding users with empty test sets from averages.
double ndcg_at_k(const RankedSlate& slate, const std::vector<PoiIdx>& test_items, int k);

struct PmUsersResult {
  GroupDistribution dist;
  bool degenerate = false;  // zero total NDCG mass, uniform fallback
};

/// pm(g) = sum of NDCG over group-g users / total NDCG mass. Users with an
/// empty test partition contribute nothing.
PmUsersResult estimate_pm_users(const std::vector<RankedSlate>& slates,
                                const InteractionStore& store,
                                const profiling::GroupScheme& scheme, int k);

/// pm(g) = (smoothing + slate slots filled by group-g items) / total.
GroupDistribution estimate_pm_items(const std::vector<RankedSlate>& slates,
                                    const profiling::GroupScheme& scheme, double smoothing);

/// Eq. 1 divergence, <= 0, with closed-form KL limits at beta -> 0 and 1.
double gce(const GroupDistribution& pf, const GroupDistribution& pm, const GceParams& params);

struct MadrResult {
  std::optional<double> madr;      // nullopt: fewer than 2 populated groups
  std::optional<double> fairness;  // 1 / (madr + epsilon)
};

MadrResult madr(const GroupPerformance& perf, double epsilon = 1e-12);

/// user side: mean NDCG@k per activity group; item side: share of slate
/// slots per popularity tier.
GroupPerformance group_performance(const std::vector<RankedSlate>& slates,
                                   const InteractionStore& store,
                                   const profiling::GroupScheme& scheme, Side side, int k);

/// Triangle area x*y/2 under the model's point in a 2D trade-off plot.
double tradeoff_auc(double x, double y);

struct MetricParams {
  int k = 10;
  GceParams gce;
  double madr_epsilon = 1e-12;
  double ndcg_scale = 20.0;  // NDCG-axis scaling inside AUC_au / AUC_ai
  std::vector<GroupDistribution> user_targets;  // empty -> defaults
  std::vector<GroupDistribution> item_targets;
};

std::vector<GroupDistribution> default_user_targets();
std::vector<GroupDistribution> default_item_targets();

struct ModelReport {
  std::string model;
  double ndcg = 0.0;
  std::size_t evaluated_users = 0;
  std::size_t excluded_users = 0;  // empty test partitions
  GroupDistribution pm_users;
  GroupDistribution pm_items;
  bool pm_users_degenerate = false;
  std::vector<double> user_gce;  // one per user target
  std::vector<double> item_gce;  // one per item target
  std::size_t user_highlight = 0;  // argmin |GCE|, ties to the lowest index
  std::size_t item_highlight = 0;
  GroupPerformance user_perf;
  GroupPerformance item_perf;
  std::optional<double> user_madr, user_fairness;
  std::optional<double> item_madr, item_fairness;
  std::optional<double> auc_au, auc_ai, auc_ui;
};

struct FairnessReport {
  int k = 10;
  double beta = 0.5;
  double smoothing = 1.0;
  double ndcg_scale = 20.0;
  std::vector<GroupDistribution> user_targets;
  std::vector<GroupDistribution> item_targets;
  std::vector<ModelReport> models;
};

ModelReport evaluate_model(const std::string& name, const std::vector<RankedSlate>& slates,
                           const InteractionStore& store, const profiling::GroupScheme& scheme,
                           const MetricParams& params);

FairnessReport build_report(
    const std::vector<std::pair<std::string, const std::vector<RankedSlate>*>>& model_slates,
    const InteractionStore& store, const profiling::GroupScheme& scheme,
    const MetricParams& params);

}  // namespace poibench::metrics
