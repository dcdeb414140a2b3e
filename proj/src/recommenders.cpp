#include "poibench/recommenders.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>

#include "poibench/errors.hpp"
#include "poibench/util/binio.hpp"
#include "poibench/util/csv.hpp"
#include "poibench/util/io.hpp"
#include "poibench/util/parallel.hpp"
#include "poibench/util/rng.hpp"

namespace poibench::rec {

namespace {

void require_split(const InteractionStore& store, const char* who) {
  if (!store.has_split) throw DataError(std::string(who) + ": store has no train/test split");
}

// observed train pairs in (user, poi) order, y = aggregate check-in count
struct TrainPair {
  UserIdx user;
  PoiIdx poi;
  double y;
};

std::vector<TrainPair> train_pairs(const InteractionStore& store) {
  std::vector<TrainPair> pairs;
  for (UserIdx u = 0; u < static_cast<UserIdx>(store.n_users()); ++u) {
    for (const PoiIdx p : store.split[static_cast<std::size_t>(u)].train)
      pairs.push_back({u, p, static_cast<double>(store.count(u, p))});
  }
  return pairs;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ln sigma(x), stable on both tails
double log_sigmoid(double x) {
  if (x > 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double digamma(double x) {
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240))));
  return result;
}

}  // namespace

FactorModel train_mostpop(const InteractionStore& store) {
  require_split(store, "mostpop");
  if (store.n_train_pairs() == 0) throw DataError("mostpop: empty train partition");
  FactorModel m;
  m.kind = "mostpop";
  m.d = 1;
  m.n_users = store.n_users();
  m.n_pois = store.n_pois();
  m.user_factors.assign(m.n_users, 1.0);
  m.item_factors.assign(m.n_pois, 0.0);
  for (const auto& tp : train_pairs(store)) m.item_factors[static_cast<std::size_t>(tp.poi)] += tp.y;
  return m;
}

double bpr_triple_loss(const FactorModel& model, const BprTriple& t, double regularization) {
  const double x = model.score(t.user, t.pos) - model.score(t.user, t.neg);
  const std::size_t d = static_cast<std::size_t>(model.d);
  const double* uf = &model.user_factors[static_cast<std::size_t>(t.user) * d];
  const double* vi = &model.item_factors[static_cast<std::size_t>(t.pos) * d];
  const double* vj = &model.item_factors[static_cast<std::size_t>(t.neg) * d];
  double sq = 0.0;
  for (std::size_t k = 0; k < d; ++k) sq += uf[k] * uf[k] + vi[k] * vi[k] + vj[k] * vj[k];
  if (!model.item_bias.empty()) {
    const double bi = model.item_bias[static_cast<std::size_t>(t.pos)];
    const double bj = model.item_bias[static_cast<std::size_t>(t.neg)];
    sq += bi * bi + bj * bj;
  }
  return log_sigmoid(x) - regularization * sq;
}

BprGradient bpr_triple_gradient(const FactorModel& model, const BprTriple& t,
                                double regularization) {
  const double x = model.score(t.user, t.pos) - model.score(t.user, t.neg);
  const double s = sigmoid(-x);
  const std::size_t d = static_cast<std::size_t>(model.d);
  const double* uf = &model.user_factors[static_cast<std::size_t>(t.user) * d];
  const double* vi = &model.item_factors[static_cast<std::size_t>(t.pos) * d];
  const double* vj = &model.item_factors[static_cast<std::size_t>(t.neg) * d];
  BprGradient g;
  g.d_user.resize(d);
  g.d_pos.resize(d);
  g.d_neg.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    g.d_user[k] = s * (vi[k] - vj[k]) - 2.0 * regularization * uf[k];
    g.d_pos[k] = s * uf[k] - 2.0 * regularization * vi[k];
    g.d_neg[k] = -s * uf[k] - 2.0 * regularization * vj[k];
  }
  if (!model.item_bias.empty()) {
    g.d_bias_pos = s - 2.0 * regularization * model.item_bias[static_cast<std::size_t>(t.pos)];
    g.d_bias_neg = -s - 2.0 * regularization * model.item_bias[static_cast<std::size_t>(t.neg)];
  }
  return g;
}

FactorModel train_bpr(const InteractionStore& store, const BprParams& params) {
  if (params.d < 1) throw ConfigError("bpr: d must be >= 1");
  if (params.learning_rate < 0) throw ConfigError("bpr: learning_rate must be >= 0");
  if (params.regularization < 0) throw ConfigError("bpr: regularization must be >= 0");
  if (params.steps_per_interaction < 0) throw ConfigError("bpr: steps_per_interaction must be >= 0");
  require_split(store, "bpr");

  const std::size_t n = store.n_users();
  const std::size_t m = store.n_pois();
  const std::size_t d = static_cast<std::size_t>(params.d);

  // a user contributes triples only with at least one positive and at least
  // one catalog item left to sample as a negative
  std::vector<UserIdx> eligible;
  for (std::size_t u = 0; u < n; ++u) {
    const auto& train = store.split[u].train;
    if (!train.empty() && train.size() < m) eligible.push_back(static_cast<UserIdx>(u));
  }
  if (eligible.empty()) throw DataError("bpr: no trainable users (no positives or full catalogs)");

  FactorModel model;
  model.kind = "bpr";
  model.d = params.d;
  model.seed = params.seed;
  model.n_users = n;
  model.n_pois = m;
  util::Rng rng(params.seed);
  model.user_factors.resize(n * d);
  model.item_factors.resize(m * d);
  for (auto& v : model.user_factors) v = rng.uniform(-0.01, 0.01);
  for (auto& v : model.item_factors) v = rng.uniform(-0.01, 0.01);
  if (params.item_bias) model.item_bias.assign(m, 0.0);
  model.hyperparams = {{"d", static_cast<double>(params.d)},
                       {"learning_rate", params.learning_rate},
                       {"regularization", params.regularization},
                       {"steps_per_interaction", params.steps_per_interaction},
                       {"item_bias", params.item_bias ? 1.0 : 0.0}};

  const std::uint64_t steps = static_cast<std::uint64_t>(
      std::llround(params.steps_per_interaction * static_cast<double>(store.n_train_pairs())));
  const double eta = params.learning_rate;
  const double lambda = params.regularization;

  for (std::uint64_t step = 0; step < steps; ++step) {
    const UserIdx u = eligible[rng.next_below(eligible.size())];
    const auto& train = store.split[static_cast<std::size_t>(u)].train;
    const PoiIdx i = train[rng.next_below(train.size())];
    PoiIdx j;
    do {
      j = static_cast<PoiIdx>(rng.next_below(m));
    } while (std::binary_search(train.begin(), train.end(), j));

    double* uf = &model.user_factors[static_cast<std::size_t>(u) * d];
    double* vi = &model.item_factors[static_cast<std::size_t>(i) * d];
    double* vj = &model.item_factors[static_cast<std::size_t>(j) * d];
    double x = 0.0;
    for (std::size_t k = 0; k < d; ++k) x += uf[k] * (vi[k] - vj[k]);
    if (!model.item_bias.empty())
      x += model.item_bias[static_cast<std::size_t>(i)] - model.item_bias[static_cast<std::size_t>(j)];
    const double s = sigmoid(-x);

    double probe = 0.0;  // NaN/inf in any touched parameter propagates here
    for (std::size_t k = 0; k < d; ++k) {
      const double u0 = uf[k], i0 = vi[k], j0 = vj[k];
      uf[k] = u0 + eta * (s * (i0 - j0) - 2.0 * lambda * u0);
      vi[k] = i0 + eta * (s * u0 - 2.0 * lambda * i0);
      vj[k] = j0 + eta * (-s * u0 - 2.0 * lambda * j0);
      probe += uf[k] + vi[k] + vj[k];
    }
    if (!model.item_bias.empty()) {
      double& bi = model.item_bias[static_cast<std::size_t>(i)];
      double& bj = model.item_bias[static_cast<std::size_t>(j)];
      bi += eta * (s - 2.0 * lambda * bi);
      bj += eta * (-s - 2.0 * lambda * bj);
      probe += bi + bj;
    }
    if (!std::isfinite(probe))
      throw NumericError("bpr diverged at step " + std::to_string(step) +
                         ": non-finite parameter");
  }
  return model;
}

namespace {

double wmf_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                     const std::vector<TrainPair>& pairs, double alpha, double lambda) {
  const Eigen::MatrixXd gram = Y.transpose() * Y;
  double j = (X * gram).cwiseProduct(X).sum();  // sum over all cells of x_ui^2
  for (const auto& tp : pairs) {
    const double x = X.row(tp.user).dot(Y.row(tp.poi));
    const double c = 1.0 + alpha * tp.y;
    j -= x * x;                        // remove the c=1, p=0 base term
    j += c * (1.0 - x) * (1.0 - x);    // observed cell with its confidence
  }
  j += lambda * (X.squaredNorm() + Y.squaredNorm());
  return j;
}

// one ALS half-sweep: solve every row of `target` against the fixed `other`
void wmf_half_sweep(Eigen::MatrixXd& target, const Eigen::MatrixXd& other,
                    const std::vector<std::vector<std::pair<std::int32_t, double>>>& obs,
                    double lambda, int threads) {
  const int d = static_cast<int>(other.cols());
  const Eigen::MatrixXd gram =
      other.transpose() * other + lambda * Eigen::MatrixXd::Identity(d, d);
  std::atomic<std::size_t> failed{std::numeric_limits<std::size_t>::max()};
  util::parallel_for(static_cast<std::size_t>(target.rows()), threads, [&](std::size_t r) {
    Eigen::MatrixXd a = gram;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    for (const auto& [col, c] : obs[r]) {
      const auto row = other.row(col);
      a.noalias() += (c - 1.0) * row.transpose() * row;
      rhs.noalias() += c * row.transpose();
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
      std::size_t expected = std::numeric_limits<std::size_t>::max();
      failed.compare_exchange_strong(expected, r);
      return;
    }
    target.row(r) = llt.solve(rhs).transpose();
  });
  if (failed.load() != std::numeric_limits<std::size_t>::max())
    throw NumericError("wmf: singular system despite ridge (row " +
                       std::to_string(failed.load()) + ")");
}

}  // namespace

FactorModel train_wmf(const InteractionStore& store, const WmfParams& params,
                      std::vector<double>* objective_trace) {
  if (params.d < 1) throw ConfigError("wmf: d must be >= 1");
  if (params.alpha < 0) throw ConfigError("wmf: alpha must be >= 0");
  if (params.regularization <= 0) throw ConfigError("wmf: regularization must be > 0");
  if (params.sweeps < 1) throw ConfigError("wmf: sweeps must be >= 1");
  require_split(store, "wmf");

  const std::size_t n = store.n_users();
  const std::size_t m = store.n_pois();
  const int d = params.d;
  const auto pairs = train_pairs(store);

  std::vector<std::vector<std::pair<std::int32_t, double>>> by_user(n), by_item(m);
  for (const auto& tp : pairs) {
    const double c = 1.0 + params.alpha * tp.y;
    by_user[static_cast<std::size_t>(tp.user)].push_back({tp.poi, c});
    by_item[static_cast<std::size_t>(tp.poi)].push_back({tp.user, c});
  }

  util::Rng rng(params.seed);
  Eigen::MatrixXd X(n, d), Y(m, d);
  for (std::size_t r = 0; r < n; ++r)
    for (int k = 0; k < d; ++k) X(static_cast<Eigen::Index>(r), k) = rng.uniform(-0.01, 0.01);
  for (std::size_t r = 0; r < m; ++r)
    for (int k = 0; k < d; ++k) Y(static_cast<Eigen::Index>(r), k) = rng.uniform(-0.01, 0.01);

  for (int sweep = 0; sweep < params.sweeps; ++sweep) {
    wmf_half_sweep(X, Y, by_user, params.regularization, params.threads);
    if (objective_trace)
      objective_trace->push_back(wmf_objective(X, Y, pairs, params.alpha, params.regularization));
    wmf_half_sweep(Y, X, by_item, params.regularization, params.threads);
    if (objective_trace)
      objective_trace->push_back(wmf_objective(X, Y, pairs, params.alpha, params.regularization));
  }

  FactorModel model;
  model.kind = "wmf";
  model.d = d;
  model.seed = params.seed;
  model.n_users = n;
  model.n_pois = m;
  model.hyperparams = {{"d", static_cast<double>(d)},
                       {"alpha", params.alpha},
                       {"regularization", params.regularization},
                       {"sweeps", static_cast<double>(params.sweeps)}};
  model.user_factors.resize(n * static_cast<std::size_t>(d));
  model.item_factors.resize(m * static_cast<std::size_t>(d));
  for (std::size_t r = 0; r < n; ++r)
    for (int k = 0; k < d; ++k)
      model.user_factors[r * static_cast<std::size_t>(d) + static_cast<std::size_t>(k)] =
          X(static_cast<Eigen::Index>(r), k);
  for (std::size_t r = 0; r < m; ++r)
    for (int k = 0; k < d; ++k)
      model.item_factors[r * static_cast<std::size_t>(d) + static_cast<std::size_t>(k)] =
          Y(static_cast<Eigen::Index>(r), k);
  for (const double v : model.user_factors)
    if (!std::isfinite(v)) throw NumericError("wmf: non-finite user factor after training");
  for (const double v : model.item_factors)
    if (!std::isfinite(v)) throw NumericError("wmf: non-finite item factor after training");
  return model;
}

namespace {

// ELBO of the observed-cells Gamma-Poisson model under the current Gamma
// posteriors, with the multinomial auxiliaries at their optimum (log-sum-exp
// over latent dimensions).
double pf_elbo(const std::vector<TrainPair>& pairs, std::size_t n, std::size_t m, int d,
               const PfParams& prm, const std::vector<double>& ushp,
               const std::vector<double>& urte, const std::vector<double>& ishp,
               const std::vector<double>& irte) {
  const std::size_t dd = static_cast<std::size_t>(d);
  std::vector<double> uln(n * dd), umean(n * dd), iln(m * dd), imean(m * dd);
  for (std::size_t x = 0; x < n * dd; ++x) {
    uln[x] = digamma(ushp[x]) - std::log(urte[x]);
    umean[x] = ushp[x] / urte[x];
  }
  for (std::size_t x = 0; x < m * dd; ++x) {
    iln[x] = digamma(ishp[x]) - std::log(irte[x]);
    imean[x] = ishp[x] / irte[x];
  }

  double elbo = 0.0;
  std::vector<double> s(dd);
  for (const auto& tp : pairs) {
    const double* ul = &uln[static_cast<std::size_t>(tp.user) * dd];
    const double* um = &umean[static_cast<std::size_t>(tp.user) * dd];
    const double* il = &iln[static_cast<std::size_t>(tp.poi) * dd];
    const double* im = &imean[static_cast<std::size_t>(tp.poi) * dd];
    double hi = -std::numeric_limits<double>::infinity();
    double dot = 0.0;
    for (std::size_t k = 0; k < dd; ++k) {
      s[k] = ul[k] + il[k];
      hi = std::max(hi, s[k]);
      dot += um[k] * im[k];
    }
    double lse = 0.0;
    for (std::size_t k = 0; k < dd; ++k) lse += std::exp(s[k] - hi);
    lse = hi + std::log(lse);
    elbo += tp.y * lse - std::lgamma(tp.y + 1.0) - dot;
  }

  const auto gamma_terms = [](double shape0, double rate0, const std::vector<double>& shp,
                              const std::vector<double>& rte) {
    double acc = 0.0;
    for (std::size_t x = 0; x < shp.size(); ++x) {
      const double eln = digamma(shp[x]) - std::log(rte[x]);
      const double mean = shp[x] / rte[x];
      acc += shape0 * std::log(rate0) - std::lgamma(shape0) + (shape0 - 1.0) * eln - rate0 * mean;
      acc += shp[x] - std::log(rte[x]) + std::lgamma(shp[x]) + (1.0 - shp[x]) * digamma(shp[x]);
    }
    return acc;
  };
  elbo += gamma_terms(prm.a, prm.b, ushp, urte);
  elbo += gamma_terms(prm.c, prm.e, ishp, irte);
  return elbo;
}

}  // namespace

FactorModel train_pf(const InteractionStore& store, const PfParams& params,
                     std::vector<double>* elbo_trace, PfState* state) {
  if (params.d < 1) throw ConfigError("pf: d must be >= 1");
  if (params.a <= 0 || params.b <= 0 || params.c <= 0 || params.e <= 0)
    throw ConfigError("pf: Gamma priors a, b, c, e must be > 0");
  if (params.max_iterations < 1) throw ConfigError("pf: max_iterations must be >= 1");
  if (params.tolerance < 0) throw ConfigError("pf: tolerance must be >= 0");
  require_split(store, "pf");

  const std::size_t n = store.n_users();
  const std::size_t m = store.n_pois();
  const std::size_t dd = static_cast<std::size_t>(params.d);
  const auto pairs = train_pairs(store);

  util::Rng rng(params.seed);
  std::vector<double> ushp(n * dd), urte(n * dd), ishp(m * dd), irte(m * dd);
  for (auto& v : ushp) v = params.a + 0.01 * rng.next_double();
  for (auto& v : urte) v = params.b + 0.01 * rng.next_double();
  for (auto& v : ishp) v = params.c + 0.01 * rng.next_double();
  for (auto& v : irte) v = params.e + 0.01 * rng.next_double();

  std::vector<double> uln(n * dd), iln(m * dd), imean(m * dd), umean(n * dd);
  std::vector<double> ushp_acc, urte_acc, ishp_acc, irte_acc, phi(dd), s(dd);

  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int iter = 0; iter < params.max_iterations; ++iter) {
    for (std::size_t x = 0; x < n * dd; ++x) uln[x] = digamma(ushp[x]) - std::log(urte[x]);
    for (std::size_t x = 0; x < m * dd; ++x) {
      iln[x] = digamma(ishp[x]) - std::log(irte[x]);
      imean[x] = ishp[x] / irte[x];
    }

    ushp_acc.assign(n * dd, 0.0);
    urte_acc.assign(n * dd, 0.0);
    ishp_acc.assign(m * dd, 0.0);
    for (const auto& tp : pairs) {
      const std::size_t ub = static_cast<std::size_t>(tp.user) * dd;
      const std::size_t ib = static_cast<std::size_t>(tp.poi) * dd;
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < dd; ++k) {
        s[k] = uln[ub + k] + iln[ib + k];
        hi = std::max(hi, s[k]);
      }
      double norm = 0.0;
      for (std::size_t k = 0; k < dd; ++k) {
        phi[k] = std::exp(s[k] - hi);
        norm += phi[k];
      }
      for (std::size_t k = 0; k < dd; ++k) {
        const double z = tp.y * phi[k] / norm;
        ushp_acc[ub + k] += z;
        ishp_acc[ib + k] += z;
        urte_acc[ub + k] += imean[ib + k];  // E[beta] over this user's observed items
      }
    }
    for (std::size_t x = 0; x < n * dd; ++x) {
      ushp[x] = params.a + ushp_acc[x];
      urte[x] = params.b + urte_acc[x];
      umean[x] = ushp[x] / urte[x];
    }

    irte_acc.assign(m * dd, 0.0);
    for (const auto& tp : pairs) {
      const std::size_t ub = static_cast<std::size_t>(tp.user) * dd;
      const std::size_t ib = static_cast<std::size_t>(tp.poi) * dd;
      for (std::size_t k = 0; k < dd; ++k) irte_acc[ib + k] += umean[ub + k];
    }
    for (std::size_t x = 0; x < m * dd; ++x) {
      ishp[x] = params.c + ishp_acc[x];
      irte[x] = params.e + irte_acc[x];
    }

    const double elbo = pf_elbo(pairs, n, m, params.d, params, ushp, urte, ishp, irte);
    if (elbo_trace) elbo_trace->push_back(elbo);
    if (!std::isfinite(elbo))
      throw NumericError("pf: non-finite ELBO at iteration " + std::to_string(iter + 1));
    if (!std::isnan(prev)) {
      if (elbo < prev - 1e-8 * std::max(1.0, std::abs(prev)))
        throw NumericError("pf: ELBO decreased at iteration " + std::to_string(iter + 1) + " (" +
                           std::to_string(prev) + " -> " + std::to_string(elbo) + ")");
      if (std::abs(elbo - prev) <= params.tolerance * std::max(1.0, std::abs(prev))) break;
    }
    prev = elbo;
  }

  FactorModel model;
  model.kind = "pf";
  model.d = params.d;
  model.seed = params.seed;
  model.n_users = n;
  model.n_pois = m;
  model.hyperparams = {{"d", static_cast<double>(params.d)}, {"a", params.a}, {"b", params.b},
                       {"c", params.c},                      {"e", params.e},
                       {"max_iterations", static_cast<double>(params.max_iterations)},
                       {"tolerance", params.tolerance}};
  model.user_factors.resize(n * dd);
  model.item_factors.resize(m * dd);
  for (std::size_t x = 0; x < n * dd; ++x) model.user_factors[x] = ushp[x] / urte[x];
  for (std::size_t x = 0; x < m * dd; ++x) model.item_factors[x] = ishp[x] / irte[x];
  if (state) *state = PfState{ushp, urte, ishp, irte};
  return model;
}

std::vector<PoiIdx> candidate_pois(const InteractionStore& store, UserIdx user, ExcludeMode mode) {
  const auto& sp = store.split[static_cast<std::size_t>(user)];
  const std::size_t m = store.n_pois();
  std::vector<PoiIdx> cand;
  cand.reserve(m);
  for (PoiIdx p = 0; p < static_cast<PoiIdx>(m); ++p) {
    if (std::binary_search(sp.train.begin(), sp.train.end(), p)) continue;
    if (mode == ExcludeMode::train_and_validation &&
        std::binary_search(sp.validation.begin(), sp.validation.end(), p))
      continue;
    cand.push_back(p);
  }
  return cand;
}

RankedSlate finish_slate(UserIdx user, std::vector<SlateEntry> candidates, int k) {
  RankedSlate slate;
  slate.user = user;
  if (candidates.empty()) {
    slate.empty_candidates = true;
    return slate;
  }
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<long>(keep),
                    candidates.end(), [](const SlateEntry& a, const SlateEntry& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.poi < b.poi;
                    });
  candidates.resize(keep);
  slate.entries = std::move(candidates);
  return slate;
}

std::vector<RankedSlate> recommend_with(const InteractionStore& store, int k, ExcludeMode mode,
                                        int threads,
                                        const std::function<double(UserIdx, PoiIdx)>& scorer) {
  if (k < 1) throw ConfigError("recommend: k must be >= 1");
  require_split(store, "recommend");

  const std::size_t n = store.n_users();
  std::vector<RankedSlate> slates(n);
  util::parallel_for(n, threads, [&](std::size_t u) {
    const UserIdx uu = static_cast<UserIdx>(u);
    std::vector<PoiIdx> pois = candidate_pois(store, uu, mode);
    std::vector<SlateEntry> cand;
    cand.reserve(pois.size());
    for (PoiIdx p : pois) cand.push_back({p, scorer(uu, p)});
    slates[u] = finish_slate(uu, std::move(cand), k);
  });
  return slates;
}

std::vector<RankedSlate> recommend(const FactorModel& model, const InteractionStore& store, int k,
                                   ExcludeMode mode, int threads) {
  if (model.n_users != store.n_users() || model.n_pois != store.n_pois())
    throw DataError("recommend: model and store disagree on user/POI counts");
  return recommend_with(store, k, mode, threads,
                        [&model](UserIdx u, PoiIdx p) { return model.score(u, p); });
}

void export_rankings(const std::vector<RankedSlate>& slates, const InteractionStore& store,
                     const std::filesystem::path& path) {
  std::string out = "user_id,poi_id,rank,score\n";
  char buf[64];
  for (const auto& slate : slates) {
    const std::string& uid = store.user_ids[static_cast<std::size_t>(slate.user)];
    for (std::size_t r = 0; r < slate.entries.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%.17g", slate.entries[r].score);
      out += uid;
      out += ',';
      out += store.poi_ids[static_cast<std::size_t>(slate.entries[r].poi)];
      out += ',';
      out += std::to_string(r + 1);
      out += ',';
      out += buf;
      out += '\n';
    }
  }
  util::atomic_write_file(path, out);
}

std::vector<RankedSlate> import_external_rankings(const std::filesystem::path& path,
                                                  const InteractionStore& store) {
  const std::string text = util::read_file(path);

  struct Row {
    std::size_t lineno;
    UserIdx user;
    PoiIdx poi;
    int rank;
    double score;
  };
  std::vector<Row> rows;
  std::vector<std::string> offenders;  // unknown ids take precedence over rank errors
  bool header_seen = false;

  util::for_each_line(text, [&](std::size_t lineno, std::string_view line) {
    const std::string_view trimmed = util::trim(line);
    if (trimmed.empty()) return;
    if (!header_seen) {
      if (trimmed != "user_id,poi_id,rank,score")
        throw DataError("rankings file: missing header 'user_id,poi_id,rank,score'");
      header_seen = true;
      return;
    }
    const auto fields = util::split_fields(line, ',');
    if (fields.size() != 4)
      throw DataError("rankings file line " + std::to_string(lineno) + ": expected 4 fields, got " +
                      std::to_string(fields.size()));
    const auto user = store.user_index(fields[0]);
    const auto poi = store.poi_index(fields[1]);
    if (!user && offenders.size() < 20)
      offenders.push_back("line " + std::to_string(lineno) + ": unknown user '" +
                          std::string(fields[0]) + "'");
    if (!poi && offenders.size() < 20)
      offenders.push_back("line " + std::to_string(lineno) + ": unknown poi '" +
                          std::string(fields[1]) + "'");
    if (!user || !poi) return;

    int rank = -1;
    try {
      std::size_t used = 0;
      rank = std::stoi(std::string(fields[2]), &used);
      if (used != fields[2].size()) rank = -1;
    } catch (const std::exception&) {
      rank = -1;
    }
    if (rank < 1)
      throw DataError("rankings file line " + std::to_string(lineno) + ": bad rank '" +
                      std::string(fields[2]) + "'");
    double score = 0.0;
    std::size_t used = 0;
    try {
      score = std::stod(std::string(fields[3]), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != fields[3].size() || !std::isfinite(score))
      throw DataError("rankings file line " + std::to_string(lineno) + ": bad score '" +
                      std::string(fields[3]) + "'");
    rows.push_back({lineno, *user, *poi, rank, score});
  });

  if (!header_seen) throw DataError("rankings file: empty (header required)");
  if (!offenders.empty()) {
    std::string msg = "rankings file: unknown identifiers:";
    for (const auto& o : offenders) msg += "\n  " + o;
    throw DataError(msg);
  }

  std::vector<RankedSlate> slates;
  std::vector<std::size_t> slate_of_user(store.n_users(), std::numeric_limits<std::size_t>::max());
  for (const Row& row : rows) {
    std::size_t& idx = slate_of_user[static_cast<std::size_t>(row.user)];
    if (idx == std::numeric_limits<std::size_t>::max()) {
      idx = slates.size();
      slates.emplace_back();
      slates.back().user = row.user;
    }
    RankedSlate& slate = slates[idx];
    const std::string& uid = store.user_ids[static_cast<std::size_t>(row.user)];
    const int expected = static_cast<int>(slate.entries.size()) + 1;
    if (row.rank != expected)
      throw DataError("rankings file line " + std::to_string(row.lineno) + ": user '" + uid +
                      "' has rank " + std::to_string(row.rank) + " where rank " +
                      std::to_string(expected) + " was expected");
    for (const auto& e : slate.entries)
      if (e.poi == row.poi)
        throw DataError("rankings file line " + std::to_string(row.lineno) + ": duplicate poi '" +
                        store.poi_ids[static_cast<std::size_t>(row.poi)] + "' for user '" + uid +
                        "'");
    if (!slate.entries.empty() && row.score > slate.entries.back().score)
      throw DataError("rankings file line " + std::to_string(row.lineno) +
                      ": scores increase within user '" + uid + "'");
    slate.entries.push_back({row.poi, row.score});
  }
  return slates;
}

namespace {
constexpr char kModelMagic[4] = {'P', 'B', 'F', 'M'};
constexpr std::uint32_t kModelVersion = 1;
}  // namespace

void save_model(const FactorModel& model, const std::filesystem::path& path) {
  using namespace util::binio;
  std::string buf(kModelMagic, 4);
  put_u32(buf, kModelVersion);
  put_str(buf, model.kind);
  put_i32(buf, model.d);
  put_u64(buf, model.seed);
  put_u64(buf, model.n_users);
  put_u64(buf, model.n_pois);
  put_u64(buf, model.hyperparams.size());
  for (const auto& [key, value] : model.hyperparams) {
    put_str(buf, key);
    put_f64(buf, value);
  }
  put_u64(buf, model.user_factors.size());
  for (const double v : model.user_factors) put_f64(buf, v);
  put_u64(buf, model.item_factors.size());
  for (const double v : model.item_factors) put_f64(buf, v);
  put_u64(buf, model.item_bias.size());
  for (const double v : model.item_bias) put_f64(buf, v);
  util::atomic_write_file(path, buf);
}

FactorModel load_model(const std::filesystem::path& path) {
  const std::string buf = util::read_file(path);
  util::binio::Reader r{buf, "model"};
  r.need(4);
  if (std::memcmp(buf.data(), kModelMagic, 4) != 0)
    throw DataError("corrupt model file: bad magic");
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kModelVersion)
    throw DataError("unsupported model file version " + std::to_string(version));
  FactorModel model;
  model.kind = r.str();
  model.d = r.i32();
  model.seed = r.u64();
  model.n_users = r.u64();
  model.n_pois = r.u64();
  const std::uint64_t n_params = r.count(16);
  model.hyperparams.reserve(n_params);
  for (std::uint64_t i = 0; i < n_params; ++i) {
    std::string key = r.str();
    const double value = r.f64();
    model.hyperparams.emplace_back(std::move(key), value);
  }
  if (model.d < 1) throw DataError("corrupt model file: d < 1");
  const std::uint64_t nu = r.count(8);
  model.user_factors.resize(nu);
  for (auto& v : model.user_factors) v = r.f64();
  const std::uint64_t ni = r.count(8);
  model.item_factors.resize(ni);
  for (auto& v : model.item_factors) v = r.f64();
  const std::uint64_t nb = r.count(8);
  model.item_bias.resize(nb);
  for (auto& v : model.item_bias) v = r.f64();
  const std::size_t d = static_cast<std::size_t>(model.d);
  if (model.user_factors.size() != model.n_users * d ||
      model.item_factors.size() != model.n_pois * d ||
      (!model.item_bias.empty() && model.item_bias.size() != model.n_pois))
    throw DataError("corrupt model file: factor shapes disagree with header");
  return model;
}

}  // namespace poibench::rec
