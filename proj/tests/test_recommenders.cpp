#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "poibench/errors.hpp"
#include "poibench/recommenders.hpp"
#include "poibench/util/rng.hpp"

using namespace poibench;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() / ("poibench_rec_" + std::to_string(++counter));
  fs::create_directories(dir);
  return dir;
}

std::string padded(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", prefix, i);
  return buf;
}

// store whose train partitions are given directly as (poi, count) rows
InteractionStore rec_store(std::vector<std::vector<std::pair<PoiIdx, std::uint32_t>>> train,
                           std::size_t n_pois,
                           std::vector<std::vector<PoiIdx>> validation = {},
                           std::vector<std::vector<PoiIdx>> test = {}) {
  InteractionStore s;
  for (std::size_t u = 0; u < train.size(); ++u) s.user_ids.push_back(padded("u", u));
  for (std::size_t p = 0; p < n_pois; ++p) s.poi_ids.push_back(padded("p", p));
  s.events.resize(train.size());
  s.counts.resize(train.size());
  s.friends.resize(train.size());
  s.poi_meta.resize(n_pois);
  s.has_split = true;
  s.split.resize(train.size());
  for (std::size_t u = 0; u < train.size(); ++u) {
    std::sort(train[u].begin(), train[u].end());
    s.counts[u] = train[u];
    for (const auto& [p, c] : train[u]) s.split[u].train.push_back(p);
    if (u < validation.size()) {
      s.split[u].validation = validation[u];
      std::sort(s.split[u].validation.begin(), s.split[u].validation.end());
      for (const PoiIdx p : s.split[u].validation) s.counts[u].push_back({p, 1});
    }
    if (u < test.size()) {
      s.split[u].test = test[u];
      std::sort(s.split[u].test.begin(), s.split[u].test.end());
    }
    std::sort(s.counts[u].begin(), s.counts[u].end());
  }
  return s;
}

InteractionStore random_store(util::Rng& rng, std::size_t n_users, std::size_t n_pois) {
  std::vector<std::vector<std::pair<PoiIdx, std::uint32_t>>> train(n_users);
  std::vector<std::vector<PoiIdx>> validation(n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    std::set<PoiIdx> seen;
    const std::size_t k = 2 + rng.next_below(std::min<std::size_t>(n_pois - 2, 8));
    while (seen.size() < k) seen.insert(static_cast<PoiIdx>(rng.next_below(n_pois)));
    for (const PoiIdx p : seen) {
      if (rng.next_below(4) == 0)
        validation[u].push_back(p);
      else
        train[u].push_back({p, 1 + static_cast<std::uint32_t>(rng.next_below(5))});
    }
    if (train[u].empty()) {
      train[u].push_back({validation[u].back(), 1});
      validation[u].pop_back();
    }
  }
  return rec_store(std::move(train), n_pois, std::move(validation));
}

rec::FactorModel random_model(util::Rng& rng, std::size_t n_users, std::size_t n_pois, int d,
                              bool bias) {
  rec::FactorModel m;
  m.kind = "test";
  m.d = d;
  m.n_users = n_users;
  m.n_pois = n_pois;
  m.user_factors.resize(n_users * static_cast<std::size_t>(d));
  m.item_factors.resize(n_pois * static_cast<std::size_t>(d));
  for (auto& v : m.user_factors) v = rng.uniform(-0.5, 0.5);
  for (auto& v : m.item_factors) v = rng.uniform(-0.5, 0.5);
  if (bias) {
    m.item_bias.resize(n_pois);
    for (auto& v : m.item_bias) v = rng.uniform(-0.5, 0.5);
  }
  return m;
}

std::vector<PoiIdx> slate_pois(const RankedSlate& s) {
  std::vector<PoiIdx> out;
  for (const auto& e : s.entries) out.push_back(e.poi);
  return out;
}

}  // namespace

TEST_CASE("mostpop ranks by global train count") {
  // counts a:5 b:2 c:9 contributed by user 0; user 1 has an empty history
  auto store = rec_store({{{0, 5}, {1, 2}, {2, 9}}, {}}, 3);
  const auto model = rec::train_mostpop(store);
  CHECK(model.kind == "mostpop");
  const auto slates = rec::recommend(model, store, 3);

  // user 0 visited everything: empty slate, flagged
  CHECK(slates[0].entries.empty());
  CHECK(slates[0].empty_candidates);

  // user 1 sees the full popularity order c, a, b
  CHECK(slate_pois(slates[1]) == std::vector<PoiIdx>{2, 0, 1});
  CHECK(slates[1].entries[0].score == 9.0);
  CHECK(slates[1].entries[2].score == 2.0);
  CHECK_FALSE(slates[1].empty_candidates);
}

TEST_CASE("mostpop exclusion and tie-breaks") {
  // user 1 already visited the winner c -> slate starts at a
  auto store = rec_store({{{0, 5}, {1, 2}, {2, 9}}, {{2, 1}}}, 3);
  const auto slates = rec::recommend(rec::train_mostpop(store), store, 3);
  CHECK(slate_pois(slates[1]) == std::vector<PoiIdx>{0, 1});

  // equal counts break by item identifier (= index order)
  auto tie = rec_store({{{0, 3}, {1, 3}, {2, 3}}, {}}, 3);
  const auto t = rec::recommend(rec::train_mostpop(tie), tie, 3);
  CHECK(slate_pois(t[1]) == std::vector<PoiIdx>{0, 1, 2});

  auto single = rec_store({{{0, 1}}, {}}, 1);
  const auto s = rec::recommend(rec::train_mostpop(single), single, 5);
  CHECK(s[0].entries.empty());
  CHECK(s[0].empty_candidates);
  CHECK(slate_pois(s[1]) == std::vector<PoiIdx>{0});

  auto empty = rec_store({{}, {}}, 2);
  CHECK_THROWS_AS(rec::train_mostpop(empty), DataError);
}

TEST_CASE("recommend matches a brute-force full sort") {
  util::Rng rng(91);
  auto store = random_store(rng, 50, 40);
  const auto model = random_model(rng, 50, 40, 6, true);
  for (const auto mode : {rec::ExcludeMode::train_and_validation, rec::ExcludeMode::train_only}) {
    const auto slates = rec::recommend(model, store, 7, mode);
    REQUIRE(slates.size() == 50);
    for (std::size_t u = 0; u < 50; ++u) {
      std::vector<SlateEntry> all;
      const auto& sp = store.split[u];
      for (PoiIdx p = 0; p < 40; ++p) {
        if (std::binary_search(sp.train.begin(), sp.train.end(), p)) continue;
        if (mode == rec::ExcludeMode::train_and_validation &&
            std::binary_search(sp.validation.begin(), sp.validation.end(), p))
          continue;
        all.push_back({p, model.score(static_cast<UserIdx>(u), p)});
      }
      std::sort(all.begin(), all.end(), [](const SlateEntry& a, const SlateEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.poi < b.poi;
      });
      all.resize(std::min<std::size_t>(7, all.size()));
      REQUIRE(slates[u].entries.size() == all.size());
      for (std::size_t i = 0; i < all.size(); ++i) {
        CHECK(slates[u].entries[i].poi == all[i].poi);
        CHECK(slates[u].entries[i].score == all[i].score);
      }
    }
  }
}

TEST_CASE("recommend excludes partitions per mode") {
  util::Rng rng(92);
  auto store = random_store(rng, 60, 30);
  const auto model = random_model(rng, 60, 30, 4, false);

  const auto strict = rec::recommend(model, store, 30, rec::ExcludeMode::train_and_validation);
  const auto loose = rec::recommend(model, store, 30, rec::ExcludeMode::train_only);
  for (std::size_t u = 0; u < 60; ++u) {
    const auto& sp = store.split[u];
    for (const auto& e : strict[u].entries) {
      CHECK_FALSE(std::binary_search(sp.train.begin(), sp.train.end(), e.poi));
      CHECK_FALSE(std::binary_search(sp.validation.begin(), sp.validation.end(), e.poi));
    }
    for (const auto& e : loose[u].entries)
      CHECK_FALSE(std::binary_search(sp.train.begin(), sp.train.end(), e.poi));
    // validation-mode slates regain exactly the validation items
    CHECK(loose[u].entries.size() == strict[u].entries.size() + sp.validation.size());
  }

  CHECK_THROWS_AS(rec::recommend(model, store, 0), ConfigError);
  auto other = random_store(rng, 10, 30);
  CHECK_THROWS_AS(rec::recommend(model, other, 5), DataError);
}

TEST_CASE("recommend is invariant under strictly increasing score transforms") {
  util::Rng rng(93);
  auto store = random_store(rng, 30, 25);
  const auto model = random_model(rng, 30, 25, 5, true);
  const auto base = rec::recommend(model, store, 10);
  const auto mapped = rec::recommend_with(
      store, 10, rec::ExcludeMode::train_and_validation, 1,
      [&](UserIdx u, PoiIdx p) { return std::exp(model.score(u, p)); });
  for (std::size_t u = 0; u < 30; ++u) CHECK(slate_pois(base[u]) == slate_pois(mapped[u]));
}

TEST_CASE("recommend is deterministic across thread counts") {
  util::Rng rng(94);
  auto store = random_store(rng, 40, 30);
  const auto model = random_model(rng, 40, 30, 4, false);
  const auto one = rec::recommend(model, store, 8, rec::ExcludeMode::train_and_validation, 1);
  const auto four = rec::recommend(model, store, 8, rec::ExcludeMode::train_and_validation, 4);
  REQUIRE(one.size() == four.size());
  for (std::size_t u = 0; u < one.size(); ++u) {
    CHECK(slate_pois(one[u]) == slate_pois(four[u]));
    for (std::size_t i = 0; i < one[u].entries.size(); ++i)
      CHECK(one[u].entries[i].score == four[u].entries[i].score);
  }
}

TEST_CASE("bpr per-triple gradient matches central finite differences") {
  util::Rng rng(95);
  auto model = random_model(rng, 12, 15, 5, true);
  const double lambda = 0.01;
  const double h = 1e-5;
  int worst_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    rec::BprTriple t;
    t.user = static_cast<UserIdx>(rng.next_below(12));
    t.pos = static_cast<PoiIdx>(rng.next_below(15));
    do {
      t.neg = static_cast<PoiIdx>(rng.next_below(15));
    } while (t.neg == t.pos);

    const auto g = rec::bpr_triple_gradient(model, t, lambda);
    const std::size_t d = 5;
    std::vector<double> analytic, numeric;
    const auto probe = [&](std::vector<double>& vec, std::size_t idx) {
      const double save = vec[idx];
      vec[idx] = save + h;
      const double up = rec::bpr_triple_loss(model, t, lambda);
      vec[idx] = save - h;
      const double dn = rec::bpr_triple_loss(model, t, lambda);
      vec[idx] = save;
      return (up - dn) / (2 * h);
    };
    for (std::size_t k = 0; k < d; ++k) {
      analytic.push_back(g.d_user[k]);
      numeric.push_back(probe(model.user_factors, static_cast<std::size_t>(t.user) * d + k));
      analytic.push_back(g.d_pos[k]);
      numeric.push_back(probe(model.item_factors, static_cast<std::size_t>(t.pos) * d + k));
      analytic.push_back(g.d_neg[k]);
      numeric.push_back(probe(model.item_factors, static_cast<std::size_t>(t.neg) * d + k));
    }
    analytic.push_back(g.d_bias_pos);
    numeric.push_back(probe(model.item_bias, static_cast<std::size_t>(t.pos)));
    analytic.push_back(g.d_bias_neg);
    numeric.push_back(probe(model.item_bias, static_cast<std::size_t>(t.neg)));

    double diff2 = 0, norm2 = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff2 += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      norm2 += analytic[i] * analytic[i];
    }
    const double rel = std::sqrt(diff2) / std::max(std::sqrt(norm2), 1e-12);
    if (rel < 1e-4) ++worst_ok;
    CHECK(rel < 1e-4);
  }
  CHECK(worst_ok == 100);
}

TEST_CASE("bpr zero learning rate leaves the initialization untouched") {
  util::Rng rng(96);
  auto store = random_store(rng, 20, 18);
  rec::BprParams frozen;
  frozen.d = 4;
  frozen.learning_rate = 0.0;
  frozen.seed = 7;
  rec::BprParams untrained = frozen;
  untrained.learning_rate = 0.05;
  untrained.steps_per_interaction = 0.0;
  const auto a = rec::train_bpr(store, frozen);
  const auto b = rec::train_bpr(store, untrained);
  CHECK(a.user_factors == b.user_factors);
  CHECK(a.item_factors == b.item_factors);
  CHECK(a.item_bias == b.item_bias);
}

TEST_CASE("bpr learns block structure") {
  // two user clusters visiting two disjoint item blocks
  std::vector<std::vector<std::pair<PoiIdx, std::uint32_t>>> train(20);
  for (std::size_t u = 0; u < 10; ++u)
    for (PoiIdx p = 0; p < 8; ++p) train[u].push_back({p, 1});
  for (std::size_t u = 10; u < 20; ++u)
    for (PoiIdx p = 8; p < 16; ++p) train[u].push_back({p, 1});
  auto store = rec_store(std::move(train), 16);

  rec::BprParams params;
  params.d = 8;
  params.seed = 11;
  const auto model = rec::train_bpr(store, params);

  double within = 0, cross = 0;
  for (UserIdx u = 0; u < 20; ++u) {
    const bool first = u < 10;
    for (PoiIdx p = 0; p < 16; ++p) {
      const bool block = p < 8;
      (first == block ? within : cross) += model.score(u, p);
    }
  }
  CHECK(within / (20 * 8) > cross / (20 * 8));
}

TEST_CASE("bpr training is seed-deterministic") {
  util::Rng rng(97);
  auto store = random_store(rng, 15, 12);
  rec::BprParams params;
  params.d = 4;
  params.steps_per_interaction = 5.0;
  params.seed = 3;
  const auto a = rec::train_bpr(store, params);
  const auto b = rec::train_bpr(store, params);
  CHECK(a.user_factors == b.user_factors);
  CHECK(a.item_factors == b.item_factors);
  CHECK(a.item_bias == b.item_bias);
  params.seed = 4;
  const auto c = rec::train_bpr(store, params);
  CHECK(a.user_factors != c.user_factors);
}

TEST_CASE("bpr reports divergence with the failing step") {
  util::Rng rng(98);
  auto store = random_store(rng, 15, 12);
  rec::BprParams params;
  params.d = 4;
  params.learning_rate = 1e10;  // guaranteed blow-up
  params.seed = 5;
  try {
    rec::train_bpr(store, params);
    FAIL("expected divergence");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("bpr bias toggle is honored") {
  util::Rng rng(99);
  auto store = random_store(rng, 10, 10);
  rec::BprParams params;
  params.d = 3;
  params.steps_per_interaction = 2.0;
  const auto with_bias = rec::train_bpr(store, params);
  CHECK(with_bias.item_bias.size() == 10);
  params.item_bias = false;
  const auto without = rec::train_bpr(store, params);
  CHECK(without.item_bias.empty());
}

TEST_CASE("wmf objective never increases across half-sweeps") {
  util::Rng rng(100);
  auto store = random_store(rng, 20, 15);
  rec::WmfParams params;
  params.d = 4;
  params.sweeps = 8;
  params.seed = 13;
  std::vector<double> trace;
  const auto model = rec::train_wmf(store, params, &trace);
  REQUIRE(trace.size() == 16);
  for (std::size_t i = 1; i < trace.size(); ++i)
    CHECK(trace[i] <= trace[i - 1] + 1e-9 * std::max(1.0, std::abs(trace[i - 1])));
  for (const double v : model.user_factors) CHECK(std::isfinite(v));
  for (const double v : model.item_factors) CHECK(std::isfinite(v));
}

TEST_CASE("wmf with alpha zero ignores check-in counts") {
  // same pair sets, very different counts
  auto light = rec_store({{{0, 1}, {1, 1}}, {{1, 1}, {2, 1}}}, 3);
  auto heavy = rec_store({{{0, 900}, {1, 4}}, {{1, 77}, {2, 1}}}, 3);
  rec::WmfParams params;
  params.d = 2;
  params.alpha = 0.0;
  params.sweeps = 5;
  params.seed = 21;
  const auto a = rec::train_wmf(light, params);
  const auto b = rec::train_wmf(heavy, params);
  CHECK(a.user_factors == b.user_factors);
  CHECK(a.item_factors == b.item_factors);
}

TEST_CASE("wmf recovers rank-1 structure") {
  // all cells observed, counts an outer product -> optimum reconstructs
  // p = 1 everywhere; with lambda = 1e-6 the objective at the optimum is
  // essentially the tiny ridge cost
  std::vector<std::vector<std::pair<PoiIdx, std::uint32_t>>> train(6);
  for (std::size_t u = 0; u < 6; ++u)
    for (PoiIdx p = 0; p < 5; ++p)
      train[u].push_back({p, static_cast<std::uint32_t>((u + 1) * (p + 1))});
  auto store = rec_store(std::move(train), 5);
  rec::WmfParams params;
  params.d = 1;
  params.alpha = 1.0;
  params.regularization = 1e-6;
  params.sweeps = 15;
  params.seed = 17;
  std::vector<double> trace;
  const auto model = rec::train_wmf(store, params, &trace);
  for (UserIdx u = 0; u < 6; ++u)
    for (PoiIdx p = 0; p < 5; ++p) CHECK(model.score(u, p) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(trace.back() < 1e-3);
}

TEST_CASE("wmf is deterministic and validates hyperparams") {
  util::Rng rng(101);
  auto store = random_store(rng, 12, 10);
  rec::WmfParams params;
  params.d = 3;
  params.sweeps = 3;
  params.seed = 2;
  const auto a = rec::train_wmf(store, params);
  const auto b = rec::train_wmf(store, params);
  CHECK(a.user_factors == b.user_factors);
  CHECK(a.item_factors == b.item_factors);
  params.threads = 4;
  const auto c = rec::train_wmf(store, params);
  CHECK(a.user_factors == c.user_factors);

  rec::WmfParams bad;
  bad.d = 0;
  CHECK_THROWS_AS(rec::train_wmf(store, bad), ConfigError);
  bad = {};
  bad.regularization = 0.0;
  CHECK_THROWS_AS(rec::train_wmf(store, bad), ConfigError);
  bad = {};
  bad.alpha = -1.0;
  CHECK_THROWS_AS(rec::train_wmf(store, bad), ConfigError);
}

TEST_CASE("pf ELBO is non-decreasing and factors stay positive") {
  util::Rng rng(102);
  auto store = random_store(rng, 15, 12);
  rec::PfParams params;
  params.d = 3;
  params.seed = 9;
  std::vector<double> trace;
  const auto model = rec::train_pf(store, params, &trace);
  REQUIRE(trace.size() >= 2);
  for (std::size_t i = 1; i < trace.size(); ++i)
    CHECK(trace[i] >= trace[i - 1] - 1e-8 * std::max(1.0, std::abs(trace[i - 1])));
  for (const double v : model.user_factors) CHECK(v > 0.0);
  for (const double v : model.item_factors) CHECK(v > 0.0);
}

TEST_CASE("pf with no evidence returns the prior means") {
  auto store = rec_store({{}, {}, {}}, 4);
  rec::PfParams params;
  params.d = 3;
  params.a = 0.5;
  params.b = 0.25;
  params.c = 0.3;
  params.e = 0.6;
  rec::PfState state;
  const auto model = rec::train_pf(store, params, nullptr, &state);
  for (const double v : state.user_shape) CHECK(v == doctest::Approx(0.5).epsilon(1e-9));
  for (const double v : state.user_rate) CHECK(v == doctest::Approx(0.25).epsilon(1e-9));
  for (const double v : state.item_shape) CHECK(v == doctest::Approx(0.3).epsilon(1e-9));
  for (const double v : state.item_rate) CHECK(v == doctest::Approx(0.6).epsilon(1e-9));
  for (const double v : model.user_factors) CHECK(v == doctest::Approx(0.5 / 0.25).epsilon(1e-9));
  for (const double v : model.item_factors) CHECK(v == doctest::Approx(0.3 / 0.6).epsilon(1e-9));
}

TEST_CASE("pf responsibilities are normalized") {
  util::Rng rng(103);
  auto store = random_store(rng, 10, 8);
  rec::PfParams params;
  params.d = 4;
  params.seed = 15;
  rec::PfState state;
  rec::train_pf(store, params, nullptr, &state);
  // sum_k (shape - prior shape) equals the user's (item's) total train count
  for (std::size_t u = 0; u < 10; ++u) {
    double expected = 0;
    for (const PoiIdx p : store.split[u].train)
      expected += store.count(static_cast<UserIdx>(u), p);
    double got = 0;
    for (int k = 0; k < 4; ++k) got += state.user_shape[u * 4 + k] - params.a;
    CHECK(got == doctest::Approx(expected).epsilon(1e-9));
  }
  for (std::size_t p = 0; p < 8; ++p) {
    double expected = 0;
    for (std::size_t u = 0; u < 10; ++u) {
      const auto& train = store.split[u].train;
      if (std::binary_search(train.begin(), train.end(), static_cast<PoiIdx>(p)))
        expected += store.count(static_cast<UserIdx>(u), static_cast<PoiIdx>(p));
    }
    double got = 0;
    for (int k = 0; k < 4; ++k) got += state.item_shape[p * 4 + k] - params.c;
    CHECK(got == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("pf is seed-deterministic") {
  util::Rng rng(104);
  auto store = random_store(rng, 10, 8);
  rec::PfParams params;
  params.d = 3;
  params.seed = 30;
  const auto a = rec::train_pf(store, params);
  const auto b = rec::train_pf(store, params);
  CHECK(a.user_factors == b.user_factors);
  CHECK(a.item_factors == b.item_factors);
  params.seed = 31;
  const auto c = rec::train_pf(store, params);
  CHECK(a.user_factors != c.user_factors);
}

TEST_CASE("ranking export and import round-trips") {
  util::Rng rng(105);
  auto store = random_store(rng, 25, 20);
  const auto model = random_model(rng, 25, 20, 4, true);
  const auto slates = rec::recommend(model, store, 6);
  const auto dir = tmp_dir();
  rec::export_rankings(slates, store, dir / "rank.csv");
  const auto back = rec::import_external_rankings(dir / "rank.csv", store);

  std::size_t expected = 0;
  for (const auto& s : slates)
    if (!s.entries.empty()) ++expected;
  REQUIRE(back.size() == expected);
  std::size_t j = 0;
  for (const auto& s : slates) {
    if (s.entries.empty()) continue;
    CHECK(back[j].user == s.user);
    REQUIRE(back[j].entries.size() == s.entries.size());
    for (std::size_t i = 0; i < s.entries.size(); ++i) {
      CHECK(back[j].entries[i].poi == s.entries[i].poi);
      CHECK(back[j].entries[i].score == s.entries[i].score);  // %.17g is lossless
    }
    ++j;
  }
}

TEST_CASE("ranking import rejects malformed files") {
  auto store = rec_store({{{0, 1}}, {{1, 1}}}, 3);
  const auto dir = tmp_dir();
  const auto write = [&](const char* name, const std::string& body) {
    std::ofstream out(dir / name);
    out << body;
    return dir / name;
  };

  // rank gap 1 -> 3
  const auto gap = write("gap.csv",
                         "user_id,poi_id,rank,score\n"
                         "u000,p001,1,0.9\n"
                         "u000,p002,3,0.5\n");
  try {
    rec::import_external_rankings(gap, store);
    FAIL("expected rank-gap error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("rank 3") != std::string::npos);
    CHECK(msg.find("rank 2") != std::string::npos);
  }

  // unknown identifiers listed, all of them
  const auto unknown = write("unknown.csv",
                             "user_id,poi_id,rank,score\n"
                             "ghost,p001,1,0.9\n"
                             "u000,nowhere,1,0.8\n");
  try {
    rec::import_external_rankings(unknown, store);
    FAIL("expected unknown-id error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("ghost") != std::string::npos);
    CHECK(msg.find("nowhere") != std::string::npos);
  }

  const auto headerless = write("headerless.csv", "u000,p001,1,0.9\n");
  CHECK_THROWS_AS(rec::import_external_rankings(headerless, store), DataError);

  const auto dup = write("dup.csv",
                         "user_id,poi_id,rank,score\n"
                         "u000,p001,1,0.9\n"
                         "u000,p001,2,0.8\n");
  CHECK_THROWS_AS(rec::import_external_rankings(dup, store), DataError);

  const auto rising = write("rising.csv",
                            "user_id,poi_id,rank,score\n"
                            "u000,p001,1,0.5\n"
                            "u000,p002,2,0.9\n");
  CHECK_THROWS_AS(rec::import_external_rankings(rising, store), DataError);

  // interleaved users are fine as long as each rank sequence is contiguous
  const auto interleaved = write("inter.csv",
                                 "user_id,poi_id,rank,score\n"
                                 "u000,p001,1,0.9\n"
                                 "u001,p000,1,0.7\n"
                                 "u000,p002,2,0.8\n");
  const auto ok = rec::import_external_rankings(interleaved, store);
  REQUIRE(ok.size() == 2);
  CHECK(ok[0].entries.size() == 2);
  CHECK(ok[1].entries.size() == 1);
}

TEST_CASE("model checkpoints round-trip exactly") {
  util::Rng rng(106);
  auto store = random_store(rng, 12, 10);
  const auto dir = tmp_dir();

  rec::BprParams bpr;
  bpr.d = 3;
  bpr.steps_per_interaction = 2.0;
  bpr.seed = 77;
  rec::WmfParams wmf;
  wmf.d = 3;
  wmf.sweeps = 2;
  rec::PfParams pf;
  pf.d = 2;
  pf.max_iterations = 5;

  const std::vector<rec::FactorModel> models = {
      rec::train_mostpop(store), rec::train_bpr(store, bpr), rec::train_wmf(store, wmf),
      rec::train_pf(store, pf)};
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto path = dir / ("model" + std::to_string(i) + ".bin");
    rec::save_model(models[i], path);
    const auto back = rec::load_model(path);
    CHECK(back.kind == models[i].kind);
    CHECK(back.d == models[i].d);
    CHECK(back.seed == models[i].seed);
    CHECK(back.n_users == models[i].n_users);
    CHECK(back.n_pois == models[i].n_pois);
    CHECK(back.hyperparams == models[i].hyperparams);
    CHECK(back.user_factors == models[i].user_factors);
    CHECK(back.item_factors == models[i].item_factors);
    CHECK(back.item_bias == models[i].item_bias);
  }

  std::ofstream bad(dir / "bad.bin", std::ios::binary);
  bad << "NOPE";
  bad.close();
  CHECK_THROWS_AS(rec::load_model(dir / "bad.bin"), DataError);
}
