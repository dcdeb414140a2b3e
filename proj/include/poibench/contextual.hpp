#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "poibench/recommenders.hpp"
#include "poibench/types.hpp"

namespace poibench::ctx {

/// Empirical CDF over strictly positive raw scores. Exact (sorted values)
/// up to exact_limit collected values; past that it degrades to a fixed-bin
/// histogram over (0, value_bound], which stays deterministic and monotone
/// with bounded memory. Small corpora always take the exact path.
class EmpiricalCdf {
 public:
  static constexpr std::size_t kDefaultExactLimit = std::size_t(1) << 22;
  static constexpr std::size_t kBins = std::size_t(1) << 20;

  explicit EmpiricalCdf(double value_bound = 0.0,
                        std::size_t exact_limit = kDefaultExactLimit)
      : bound_(value_bound), exact_limit_(exact_limit) {}

  void add(double v);
  void finalize();
  double operator()(double v) const;  // share of values <= v; 0 for v <= 0
  std::size_t size() const { return total_; }
  bool uses_histogram() const { return !histogram_.empty(); }

 private:
  std::size_t bin_of(double v) const;

  double bound_;
  std::size_t exact_limit_;
  std::size_t total_ = 0;
  std::vector<double> values_;          // exact path, sorted by finalize()
  std::vector<std::uint64_t> histogram_;  // cumulative after finalize()
  bool finalized_ = false;
};

/// Adaptive Gaussian KDE over a user's train check-in coordinates,
/// bandwidths in km, haversine distances.
struct KdeModel {
  std::vector<double> lat, lon;    // kernel centers
  double pilot_h = 0.1;            // km, Scott's rule with a 0.1 km floor
  std::vector<double> adaptive_h;  // per center
  double adaptivity = 0.5;
  bool no_coordinates = false;     // no train check-ins: score neutralized to 1
};

struct KdeParams {
  double floor_km = 0.1;
  double adaptivity = 0.5;
};

KdeModel build_kde(const InteractionStore& store, UserIdx user, const KdeParams& params = {});
double geo_score(const KdeModel& model, double lat, double lon);

/// Friend-visit mass per (user, poi), CDF-calibrated corpus-wide.
struct SocialModel {
  // per user, sorted by poi: raw = sum of friends' train check-in counts
  std::vector<std::vector<std::pair<PoiIdx, double>>> raw;
  EmpiricalCdf cdf{0.0};
};

SocialModel build_social(const InteractionStore& store);
double social_score(const SocialModel& model, UserIdx user, PoiIdx poi);

/// Category-taste times in-category popularity, CDF-calibrated.
struct CategoricalModel {
  // per user, sorted by category index: train check-in share per category
  std::vector<std::vector<std::pair<std::int32_t, double>>> user_freq;
  // per poi, sorted by category index: popularity of the poi within that category
  std::vector<std::vector<std::pair<std::int32_t, double>>> poi_pop;
  EmpiricalCdf cdf{1.0};  // raw scores are bounded by 1
  std::size_t pois_without_categories = 0;
};

CategoricalModel build_categorical(const InteractionStore& store);
double categorical_raw(const CategoricalModel& model, UserIdx user, PoiIdx poi);
double categorical_score(const CategoricalModel& model, UserIdx user, PoiIdx poi);

/// Row-normalized first-order transition probabilities over train
/// check-in successions.
struct TransitionModel {
  std::vector<std::vector<std::pair<PoiIdx, double>>> rows;  // per from-poi, sorted by to-poi
  double recency_base = 2.0;
};

struct TransitionParams {
  double recency_base = 2.0;
  std::optional<std::int64_t> max_gap;  // seconds; unset = no limit
};

TransitionModel build_transitions(const InteractionStore& store, const TransitionParams& params = {});

/// Additive Markov chain: recency-weighted mix of the history's rows.
/// Empty history scores 1 (neutral) for every poi; callers flag it.
double sequential_score(const TransitionModel& model, const std::vector<PoiIdx>& history,
                        PoiIdx poi);

enum class ContextualKind { geosoca, lore };

struct ContextualParams {
  KdeParams kde;
  TransitionParams transitions;
  // fusion exponents; 0 disables a component
  double geo_weight = 1.0;
  double social_weight = 1.0;
  double categorical_weight = 1.0;
  double sequential_weight = 1.0;
};

struct ContextualModel {
  ContextualKind kind = ContextualKind::geosoca;
  ContextualParams params;
  std::vector<KdeModel> kde;                    // per user
  SocialModel social;
  CategoricalModel categorical;                 // geosoca only
  TransitionModel transitions;                  // lore only
  std::vector<std::vector<PoiIdx>> histories;   // lore only: train events in time order
  rec::FactorModel mostpop;                     // fallback for empty-information users
};

/// Requires category data (refuses Gowalla-shaped input).
ContextualModel build_geosoca(const InteractionStore& store, const ContextualParams& params = {});
ContextualModel build_lore(const InteractionStore& store, const ContextualParams& params = {});

struct ComponentScores {
  double geo = 1.0;
  double social = 1.0;
  double categorical = 1.0;  // geosoca only
  double sequential = 1.0;   // lore only
  bool geo_neutral = false;
  bool sequential_neutral = false;
};

ComponentScores component_scores(const ContextualModel& model, const InteractionStore& store,
                                 UserIdx user, PoiIdx poi);

struct FuseResult {
  std::vector<RankedSlate> slates;
  std::vector<bool> empty_information;  // per user: all components carried no signal
};

FuseResult fuse(const ContextualModel& model, const InteractionStore& store, int k,
                rec::ExcludeMode mode = rec::ExcludeMode::train_and_validation, int threads = 1);

}  // namespace poibench::ctx
