#include "poibench/contextual.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "poibench/errors.hpp"
#include "poibench/util/parallel.hpp"

namespace poibench::ctx {

namespace {

constexpr double kEarthRadiusKm = 6371.0088;

double to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  const double p1 = to_rad(lat1);
  const double p2 = to_rad(lat2);
  const double dp = to_rad(lat2 - lat1);
  const double dl = to_rad(lon2 - lon1);
  const double sp = std::sin(dp / 2.0);
  const double sl = std::sin(dl / 2.0);
  const double a = sp * sp + std::cos(p1) * std::cos(p2) * sl * sl;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

double gauss2(double dist_km, double h_km) {
  const double z = dist_km / h_km;
  return std::exp(-0.5 * z * z) / (2.0 * std::numbers::pi * h_km * h_km);
}

void require_split(const InteractionStore& store, const char* who) {
  if (!store.has_split) throw DataError(std::string(who) + ": store has no train/test split");
}

/// Distinct-poi check-in counts within the user's train window.
std::vector<std::pair<PoiIdx, double>> train_counts(const InteractionStore& store, UserIdx user) {
  const auto& ev = store.events[static_cast<std::size_t>(user)];
  const std::uint32_t end = store.split[static_cast<std::size_t>(user)].n_train_events;
  std::vector<PoiIdx> pois;
  pois.reserve(end);
  for (std::uint32_t t = 0; t < end; ++t) pois.push_back(ev[t].poi);
  std::sort(pois.begin(), pois.end());
  std::vector<std::pair<PoiIdx, double>> out;
  for (std::size_t i = 0; i < pois.size();) {
    std::size_t j = i;
    while (j < pois.size() && pois[j] == pois[i]) ++j;
    out.push_back({pois[i], static_cast<double>(j - i)});
    i = j;
  }
  return out;
}

double sorted_lookup(const std::vector<std::pair<PoiIdx, double>>& row, PoiIdx key) {
  auto it = std::lower_bound(row.begin(), row.end(), key,
                             [](const auto& a, PoiIdx b) { return a.first < b; });
  return (it != row.end() && it->first == key) ? it->second : 0.0;
}

}  // namespace

void EmpiricalCdf::add(double v) {
  ++total_;
  if (histogram_.empty()) {
    values_.push_back(v);
    if (values_.size() > exact_limit_ && bound_ > 0.0) {
      histogram_.assign(kBins, 0);
      for (double x : values_) ++histogram_[bin_of(x)];
      values_.clear();
      values_.shrink_to_fit();
    }
    return;
  }
  ++histogram_[bin_of(v)];
}

std::size_t EmpiricalCdf::bin_of(double v) const {
  if (v >= bound_) return kBins - 1;
  const double frac = v / bound_;
  auto idx = static_cast<std::size_t>(frac * static_cast<double>(kBins));
  return std::min(idx, kBins - 1);
}

void EmpiricalCdf::finalize() {
  if (finalized_) return;
  if (histogram_.empty()) {
    std::sort(values_.begin(), values_.end());
  } else {
    std::uint64_t run = 0;
    for (auto& b : histogram_) {
      run += b;
      b = run;
    }
  }
  finalized_ = true;
}

double EmpiricalCdf::operator()(double v) const {
  if (v <= 0.0 || total_ == 0) return 0.0;
  if (histogram_.empty()) {
    auto it = std::upper_bound(values_.begin(), values_.end(), v);
    return static_cast<double>(it - values_.begin()) / static_cast<double>(total_);
  }
  return static_cast<double>(histogram_[bin_of(v)]) / static_cast<double>(total_);
}

KdeModel build_kde(const InteractionStore& store, UserIdx user, const KdeParams& params) {
  if (params.floor_km <= 0.0) throw ConfigError("kde: bandwidth floor must be > 0");
  if (params.adaptivity < 0.0) throw ConfigError("kde: adaptivity must be >= 0");
  require_split(store, "kde");

  KdeModel model;
  model.adaptivity = params.adaptivity;
  const auto& ev = store.events[static_cast<std::size_t>(user)];
  const std::uint32_t end = store.split[static_cast<std::size_t>(user)].n_train_events;
  model.lat.reserve(end);
  model.lon.reserve(end);
  for (std::uint32_t t = 0; t < end; ++t) {
    const PoiMeta& meta = store.poi_meta[static_cast<std::size_t>(ev[t].poi)];
    model.lat.push_back(meta.lat);
    model.lon.push_back(meta.lon);
  }
  const std::size_t n = model.lat.size();
  if (n == 0) {
    model.no_coordinates = true;
    model.pilot_h = params.floor_km;
    return model;
  }

  // Scott's rule on local-km coordinates (equirectangular about the mean
  // latitude), floored to keep repeated coordinates non-singular. The sample
  // size is the number of distinct coordinates so that duplicating the center
  // set leaves the bandwidth, and therefore the density, unchanged.
  double mean_lat = 0.0;
  for (double v : model.lat) mean_lat += v;
  mean_lat /= static_cast<double>(n);
  const double cos_lat = std::cos(to_rad(mean_lat));
  double mx = 0.0, my = 0.0;
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = kEarthRadiusKm * to_rad(model.lon[i]) * cos_lat;
    ys[i] = kEarthRadiusKm * to_rad(model.lat[i]);
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    var += (xs[i] - mx) * (xs[i] - mx) + (ys[i] - my) * (ys[i] - my);
  var /= 2.0 * static_cast<double>(n);
  const double sigma = std::sqrt(var);
  std::vector<std::pair<double, double>> uniq;
  uniq.reserve(n);
  for (std::size_t i = 0; i < n; ++i) uniq.push_back({model.lat[i], model.lon[i]});
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  model.pilot_h = std::max(
      sigma * std::pow(static_cast<double>(uniq.size()), -1.0 / 6.0), params.floor_km);

  // Pilot densities at the centers drive the per-center bandwidths.
  std::vector<double> pilot(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      acc += gauss2(haversine_km(model.lat[i], model.lon[i], model.lat[j], model.lon[j]),
                    model.pilot_h);
    pilot[i] = acc / static_cast<double>(n);
  }
  double log_gm = 0.0;
  for (double f : pilot) log_gm += std::log(f);
  log_gm /= static_cast<double>(n);
  const double gm = std::exp(log_gm);
  model.adaptive_h.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    model.adaptive_h[i] = model.pilot_h * std::pow(pilot[i] / gm, -model.adaptivity);
  return model;
}

double geo_score(const KdeModel& model, double lat, double lon) {
  if (model.no_coordinates) return 1.0;
  const std::size_t n = model.lat.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += gauss2(haversine_km(lat, lon, model.lat[i], model.lon[i]), model.adaptive_h[i]);
  return acc / static_cast<double>(n);
}

SocialModel build_social(const InteractionStore& store) {
  if (!store.has_social) throw DataError("social scoring requires friendship edges");
  require_split(store, "social");

  const std::size_t n = store.n_users();
  std::vector<std::vector<std::pair<PoiIdx, double>>> tc(n);
  for (std::size_t u = 0; u < n; ++u) tc[u] = train_counts(store, static_cast<UserIdx>(u));

  SocialModel model;
  model.raw.resize(n);
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<std::pair<PoiIdx, double>> merged;
    for (UserIdx f : store.friends[u]) {
      const auto& row = tc[static_cast<std::size_t>(f)];
      merged.insert(merged.end(), row.begin(), row.end());
    }
    std::sort(merged.begin(), merged.end());
    auto& out = model.raw[u];
    for (std::size_t i = 0; i < merged.size();) {
      double sum = 0.0;
      std::size_t j = i;
      while (j < merged.size() && merged[j].first == merged[i].first) sum += merged[j++].second;
      out.push_back({merged[i].first, sum});
      i = j;
    }
  }

  double bound = 0.0;
  for (const auto& row : model.raw)
    for (const auto& [poi, v] : row) bound = std::max(bound, v);
  model.cdf = EmpiricalCdf(bound);
  for (const auto& row : model.raw)
    for (const auto& [poi, v] : row) model.cdf.add(v);
  model.cdf.finalize();
  return model;
}

double social_score(const SocialModel& model, UserIdx user, PoiIdx poi) {
  const double s = sorted_lookup(model.raw[static_cast<std::size_t>(user)], poi);
  return model.cdf(s);
}

CategoricalModel build_categorical(const InteractionStore& store) {
  if (!store.has_categories) throw DataError("categorical scoring requires category data");
  require_split(store, "categorical");

  const std::size_t n = store.n_users();
  const std::size_t m = store.n_pois();
  const std::size_t n_cats = store.category_names.size();

  std::vector<double> poi_count(m, 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    const auto& ev = store.events[u];
    const std::uint32_t end = store.split[u].n_train_events;
    for (std::uint32_t t = 0; t < end; ++t) poi_count[static_cast<std::size_t>(ev[t].poi)] += 1.0;
  }
  std::vector<double> cat_total(n_cats, 0.0);
  for (std::size_t p = 0; p < m; ++p)
    for (std::int32_t g : store.poi_meta[p].categories)
      cat_total[static_cast<std::size_t>(g)] += poi_count[p];

  CategoricalModel model;
  model.poi_pop.resize(m);
  for (std::size_t p = 0; p < m; ++p) {
    const auto& cats = store.poi_meta[p].categories;
    if (cats.empty()) ++model.pois_without_categories;
    for (std::int32_t g : cats) {
      const double total = cat_total[static_cast<std::size_t>(g)];
      model.poi_pop[p].push_back({g, total > 0.0 ? poi_count[p] / total : 0.0});
    }
  }

  model.user_freq.resize(n);
  std::vector<double> acc(n_cats, 0.0);
  std::vector<std::int32_t> touched;
  for (std::size_t u = 0; u < n; ++u) {
    touched.clear();
    const auto& ev = store.events[u];
    const std::uint32_t end = store.split[u].n_train_events;
    double total = 0.0;
    for (std::uint32_t t = 0; t < end; ++t) {
      for (std::int32_t g : store.poi_meta[static_cast<std::size_t>(ev[t].poi)].categories) {
        if (acc[static_cast<std::size_t>(g)] == 0.0) touched.push_back(g);
        acc[static_cast<std::size_t>(g)] += 1.0;
        total += 1.0;
      }
    }
    std::sort(touched.begin(), touched.end());
    auto& out = model.user_freq[u];
    out.reserve(touched.size());
    for (std::int32_t g : touched) {
      out.push_back({g, acc[static_cast<std::size_t>(g)] / total});
      acc[static_cast<std::size_t>(g)] = 0.0;
    }
  }

  model.cdf = EmpiricalCdf(1.0);
  for (std::size_t u = 0; u < n; ++u) {
    if (model.user_freq[u].empty()) continue;
    for (std::size_t p = 0; p < m; ++p) {
      const double raw = categorical_raw(model, static_cast<UserIdx>(u), static_cast<PoiIdx>(p));
      if (raw > 0.0) model.cdf.add(raw);
    }
  }
  model.cdf.finalize();
  return model;
}

double categorical_raw(const CategoricalModel& model, UserIdx user, PoiIdx poi) {
  const auto& freq = model.user_freq[static_cast<std::size_t>(user)];
  const auto& pop = model.poi_pop[static_cast<std::size_t>(poi)];
  if (freq.empty() || pop.empty()) return 0.0;
  double raw = 0.0;
  std::size_t i = 0, j = 0;
  while (i < freq.size() && j < pop.size()) {
    if (freq[i].first < pop[j].first) {
      ++i;
    } else if (pop[j].first < freq[i].first) {
      ++j;
    } else {
      raw += freq[i].second * pop[j].second;
      ++i;
      ++j;
    }
  }
  return raw;
}

double categorical_score(const CategoricalModel& model, UserIdx user, PoiIdx poi) {
  return model.cdf(categorical_raw(model, user, poi));
}

TransitionModel build_transitions(const InteractionStore& store, const TransitionParams& params) {
  if (params.recency_base <= 0.0) throw ConfigError("transitions: recency base must be > 0");
  if (params.max_gap && *params.max_gap < 0)
    throw ConfigError("transitions: max gap must be >= 0");
  require_split(store, "transitions");

  std::vector<std::pair<PoiIdx, PoiIdx>> arcs;
  for (std::size_t u = 0; u < store.n_users(); ++u) {
    const auto& ev = store.events[u];
    const std::uint32_t end = store.split[u].n_train_events;
    for (std::uint32_t t = 0; t + 1 < end; ++t) {
      if (params.max_gap && ev[t + 1].when - ev[t].when > *params.max_gap) continue;
      arcs.push_back({ev[t].poi, ev[t + 1].poi});
    }
  }
  std::sort(arcs.begin(), arcs.end());

  TransitionModel model;
  model.recency_base = params.recency_base;
  model.rows.resize(store.n_pois());
  for (std::size_t i = 0; i < arcs.size();) {
    std::size_t j = i;
    while (j < arcs.size() && arcs[j] == arcs[i]) ++j;
    model.rows[static_cast<std::size_t>(arcs[i].first)].push_back(
        {arcs[i].second, static_cast<double>(j - i)});
    i = j;
  }
  for (auto& row : model.rows) {
    double total = 0.0;
    for (const auto& [to, c] : row) total += c;
    if (total > 0.0)
      for (auto& [to, c] : row) c /= total;
  }
  return model;
}

double sequential_score(const TransitionModel& model, const std::vector<PoiIdx>& history,
                        PoiIdx poi) {
  const std::size_t n = history.size();
  if (n == 0) return 1.0;
  const double b = model.recency_base;
  double denom = 0.0;
  for (std::size_t t = 1; t <= n; ++t)
    denom += std::pow(b, static_cast<double>(t) - static_cast<double>(n));
  double score = 0.0;
  for (std::size_t t = 1; t <= n; ++t) {
    const double w = std::pow(b, static_cast<double>(t) - static_cast<double>(n)) / denom;
    score += w * sorted_lookup(model.rows[static_cast<std::size_t>(history[t - 1])], poi);
  }
  return score;
}

namespace {

ContextualModel build_contextual(ContextualKind kind, const InteractionStore& store,
                                 const ContextualParams& params) {
  if (params.geo_weight < 0.0 || params.social_weight < 0.0 || params.categorical_weight < 0.0 ||
      params.sequential_weight < 0.0)
    throw ConfigError("contextual: fusion weights must be >= 0");
  require_split(store, "contextual");

  ContextualModel model;
  model.kind = kind;
  model.params = params;
  const std::size_t n = store.n_users();
  model.kde.reserve(n);
  for (std::size_t u = 0; u < n; ++u)
    model.kde.push_back(build_kde(store, static_cast<UserIdx>(u), params.kde));
  model.social = build_social(store);
  if (kind == ContextualKind::geosoca) {
    model.categorical = build_categorical(store);
  } else {
    model.transitions = build_transitions(store, params.transitions);
    model.histories.resize(n);
    for (std::size_t u = 0; u < n; ++u) {
      const auto& ev = store.events[u];
      const std::uint32_t end = store.split[u].n_train_events;
      model.histories[u].reserve(end);
      for (std::uint32_t t = 0; t < end; ++t) model.histories[u].push_back(ev[t].poi);
    }
  }
  model.mostpop = rec::train_mostpop(store);
  return model;
}

/// A user carries no signal when every component is at its neutral or empty
/// state; fused scores would then be constant over all candidates.
bool no_information(const ContextualModel& model, std::size_t u) {
  const bool geo_neutral = model.kde[u].no_coordinates;
  const bool social_empty = model.social.raw[u].empty();
  if (model.kind == ContextualKind::geosoca)
    return geo_neutral && social_empty && model.categorical.user_freq[u].empty();
  return geo_neutral && social_empty && model.histories[u].empty();
}

double apply_weight(double acc, double component, double weight) {
  if (weight == 0.0) return acc;
  if (weight == 1.0) return acc * component;
  return acc * std::pow(component, weight);
}

}  // namespace

ContextualModel build_geosoca(const InteractionStore& store, const ContextualParams& params) {
  return build_contextual(ContextualKind::geosoca, store, params);
}

ContextualModel build_lore(const InteractionStore& store, const ContextualParams& params) {
  return build_contextual(ContextualKind::lore, store, params);
}

ComponentScores component_scores(const ContextualModel& model, const InteractionStore& store,
                                 UserIdx user, PoiIdx poi) {
  ComponentScores cs;
  const auto u = static_cast<std::size_t>(user);
  const PoiMeta& meta = store.poi_meta[static_cast<std::size_t>(poi)];
  cs.geo_neutral = model.kde[u].no_coordinates;
  cs.geo = geo_score(model.kde[u], meta.lat, meta.lon);
  cs.social = social_score(model.social, user, poi);
  if (model.kind == ContextualKind::geosoca) {
    cs.categorical = categorical_score(model.categorical, user, poi);
  } else {
    cs.sequential_neutral = model.histories[u].empty();
    cs.sequential = sequential_score(model.transitions, model.histories[u], poi);
  }
  return cs;
}

FuseResult fuse(const ContextualModel& model, const InteractionStore& store, int k,
                rec::ExcludeMode mode, int threads) {
  if (k < 1) throw ConfigError("fuse: k must be >= 1");
  require_split(store, "fuse");
  const std::size_t n = store.n_users();
  const std::size_t m = store.n_pois();
  if (model.kde.size() != n)
    throw DataError("fuse: contextual model and store disagree on user count");

  FuseResult out;
  out.slates.resize(n);
  out.empty_information.resize(n);
  for (std::size_t u = 0; u < n; ++u) out.empty_information[u] = no_information(model, u);

  const ContextualParams& prm = model.params;
  util::parallel_for(n, threads, [&](std::size_t u) {
    const auto uu = static_cast<UserIdx>(u);
    std::vector<PoiIdx> pois = rec::candidate_pois(store, uu, mode);
    std::vector<SlateEntry> cand;
    cand.reserve(pois.size());

    if (out.empty_information[u]) {
      for (PoiIdx p : pois) cand.push_back({p, model.mostpop.score(uu, p)});
      out.slates[u] = rec::finish_slate(uu, std::move(cand), k);
      return;
    }

    const KdeModel& kde = model.kde[u];
    const bool lore = model.kind == ContextualKind::lore;
    const bool seq_neutral = lore && model.histories[u].empty();
    std::vector<double> seq;
    if (lore && !seq_neutral) {
      // One recency-weighted mix of the history's transition rows per user.
      seq.assign(m, 0.0);
      const auto& hist = model.histories[u];
      const std::size_t len = hist.size();
      const double b = model.transitions.recency_base;
      double denom = 0.0;
      for (std::size_t t = 1; t <= len; ++t)
        denom += std::pow(b, static_cast<double>(t) - static_cast<double>(len));
      for (std::size_t t = 1; t <= len; ++t) {
        const double w =
            std::pow(b, static_cast<double>(t) - static_cast<double>(len)) / denom;
        for (const auto& [to, pr] : model.transitions.rows[static_cast<std::size_t>(hist[t - 1])])
          seq[static_cast<std::size_t>(to)] += w * pr;
      }
    }

    for (PoiIdx p : pois) {
      const PoiMeta& meta = store.poi_meta[static_cast<std::size_t>(p)];
      double fused = 1.0;
      fused = apply_weight(fused, geo_score(kde, meta.lat, meta.lon), prm.geo_weight);
      fused = apply_weight(fused, social_score(model.social, uu, p), prm.social_weight);
      if (model.kind == ContextualKind::geosoca) {
        fused = apply_weight(fused, categorical_score(model.categorical, uu, p),
                             prm.categorical_weight);
      } else {
        const double s = seq_neutral ? 1.0 : seq[static_cast<std::size_t>(p)];
        fused = apply_weight(fused, s, prm.sequential_weight);
      }
      cand.push_back({p, fused});
    }
    out.slates[u] = rec::finish_slate(uu, std::move(cand), k);
  });
  return out;
}

}  // namespace poibench::ctx
