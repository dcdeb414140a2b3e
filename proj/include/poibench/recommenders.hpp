#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "poibench/types.hpp"

namespace poibench::rec {

/// Dense latent-factor model shared by every trainer. MostPop fits the
/// contract with d = 1: user factors all one, item factors the global
/// train check-in counts.
struct FactorModel {
  std::string kind;  // mostpop | bpr | wmf | pf
  std::int32_t d = 1;
  std::uint64_t seed = 0;
  std::size_t n_users = 0;
  std::size_t n_pois = 0;
  std::vector<double> user_factors;  // row-major n_users x d
  std::vector<double> item_factors;  // row-major n_pois x d
  std::vector<double> item_bias;     // empty, or one entry per POI
  std::vector<std::pair<std::string, double>> hyperparams;

  double score(UserIdx u, PoiIdx p) const {
    const double* uf = &user_factors[static_cast<std::size_t>(u) * d];
    const double* vf = &item_factors[static_cast<std::size_t>(p) * d];
    double s = 0.0;
    for (std::int32_t k = 0; k < d; ++k) s += uf[k] * vf[k];
    if (!item_bias.empty()) s += item_bias[static_cast<std::size_t>(p)];
    return s;
  }
};

struct BprParams {
  int d = 32;
  double learning_rate = 0.05;
  double regularization = 0.01;
  double steps_per_interaction = 30.0;  // total steps = this * |train pairs|
  bool item_bias = true;
  std::uint64_t seed = 1;
};

struct WmfParams {
  int d = 32;
  double alpha = 40.0;  // confidence weight, c = 1 + alpha * count
  double regularization = 0.1;
  int sweeps = 15;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct PfParams {
  int d = 32;
  double a = 0.3, b = 0.3;  // user Gamma prior shape / rate
  double c = 0.3, e = 0.3;  // item Gamma prior shape / rate
  int max_iterations = 100;
  double tolerance = 1e-5;  // relative ELBO change stopping rule
  std::uint64_t seed = 1;
};

FactorModel train_mostpop(const InteractionStore& store);
FactorModel train_bpr(const InteractionStore& store, const BprParams& params);

/// objective_trace, when given, records the confidence-weighted objective
/// after every ALS half-sweep (users, then items).
FactorModel train_wmf(const InteractionStore& store, const WmfParams& params,
                      std::vector<double>* objective_trace = nullptr);

/// Variational Gamma posteriors for inspection.
struct PfState {
  std::vector<double> user_shape, user_rate;  // n_users x d
  std::vector<double> item_shape, item_rate;  // n_pois x d
};

/// elbo_trace records the bound after every full coordinate-ascent pass.
FactorModel train_pf(const InteractionStore& store, const PfParams& params,
                     std::vector<double>* elbo_trace = nullptr, PfState* state = nullptr);

/// Per-triple BPR pieces, exposed so the gradient can be checked against
/// finite differences.
struct BprTriple {
  UserIdx user;
  PoiIdx pos;
  PoiIdx neg;
};

struct BprGradient {
  std::vector<double> d_user, d_pos, d_neg;  // length d each
  double d_bias_pos = 0.0, d_bias_neg = 0.0;
};

double bpr_triple_loss(const FactorModel& model, const BprTriple& t, double regularization);
BprGradient bpr_triple_gradient(const FactorModel& model, const BprTriple& t,
                                double regularization);

enum class ExcludeMode {
  train_and_validation,  // scoring for test evaluation
  train_only,            // scoring for validation-based selection
};

/// Top-k slates over unvisited POIs, ties broken by item identifier.
/// The scorer variant accepts any (user, poi) -> score function; it must be
/// safe to call concurrently when threads > 1.
std::vector<RankedSlate> recommend(const FactorModel& model, const InteractionStore& store, int k,
                                   ExcludeMode mode = ExcludeMode::train_and_validation,
                                   int threads = 1);
std::vector<RankedSlate> recommend_with(const InteractionStore& store, int k, ExcludeMode mode,
                                        int threads,
                                        const std::function<double(UserIdx, PoiIdx)>& scorer);

/// Candidate POIs for one user under the exclusion mode, ascending.
std::vector<PoiIdx> candidate_pois(const InteractionStore& store, UserIdx user, ExcludeMode mode);

/// Sorts scored candidates by (score desc, poi asc), keeps the top k, and
/// flags the slate when the candidate list is empty.
RankedSlate finish_slate(UserIdx user, std::vector<SlateEntry> candidates, int k);

/// CSV `user_id,poi_id,rank,score`; users with empty slates are omitted.
void export_rankings(const std::vector<RankedSlate>& slates, const InteractionStore& store,
                     const std::filesystem::path& path);
std::vector<RankedSlate> import_external_rankings(const std::filesystem::path& path,
                                                  const InteractionStore& store);

void save_model(const FactorModel& model, const std::filesystem::path& path);
FactorModel load_model(const std::filesystem::path& path);

}  // namespace poibench::rec
