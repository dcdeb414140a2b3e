#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "poibench/dataset.hpp"
#include "poibench/errors.hpp"
#include "poibench/util/io.hpp"
#include "poibench/util/rng.hpp"

using namespace poibench;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "poibench_dataset_tests";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path write_tmp(const std::string& name, const std::string& content) {
  const fs::path p = tmp_dir() / name;
  util::atomic_write_file(p, content);
  return p;
}

// Rebuild a RawDataset from a store so preprocess can be applied again.
RawDataset store_to_raw(const InteractionStore& store) {
  RawDataset raw;
  raw.has_social = store.has_social;
  raw.has_categories = store.has_categories;
  for (std::size_t u = 0; u < store.n_users(); ++u) {
    for (const Event& e : store.events[u]) {
      const auto& meta = store.poi_meta[static_cast<std::size_t>(e.poi)];
      raw.checkins.push_back(CheckIn{store.user_ids[u], store.poi_ids[static_cast<std::size_t>(e.poi)],
                                     meta.lat, meta.lon, e.when});
    }
    for (const UserIdx f : store.friends[u]) {
      if (static_cast<std::size_t>(f) > u)
        raw.social.emplace_back(store.user_ids[u], store.user_ids[static_cast<std::size_t>(f)]);
    }
  }
  for (std::size_t p = 0; p < store.n_pois(); ++p) {
    for (const std::int32_t c : store.poi_meta[p].categories)
      raw.categories.emplace_back(store.poi_ids[p], store.category_names[static_cast<std::size_t>(c)]);
  }
  return raw;
}

}  // namespace

TEST_CASE("ingest parses well-formed lines") {
  const auto p = write_tmp("ok.tsv",
                           "u1\tp1\t10.5\t-3.25\t1000\n"
                           "u2\tp2\t-89.9\t179.9\t2000\n"
                           "u1\tp2\t0\t0\t1500\n");
  const auto raw = dataset::ingest(p);
  REQUIRE(raw.checkins.size() == 3);
  CHECK(raw.checkins[0].user == "u1");
  CHECK(raw.checkins[0].poi == "p1");
  CHECK(raw.checkins[0].lat == 10.5);
  CHECK(raw.checkins[0].lon == -3.25);
  CHECK(raw.checkins[0].when == 1000);
  CHECK(raw.malformed_checkin_lines.empty());
  CHECK_FALSE(raw.has_social);
  CHECK_FALSE(raw.has_categories);
}

TEST_CASE("ingest accepts comma delimiter") {
  const auto p = write_tmp("ok.csv", "u1,p1,10.5,-3.25,1000\nu2,p2,1,1,99\n");
  const auto raw = dataset::ingest(p);
  CHECK(raw.checkins.size() == 2);
}

TEST_CASE("ingest counts malformed lines below the fatal limit") {
  std::string text;
  for (int i = 0; i < 100; ++i)
    text += "u" + std::to_string(i) + "\tp\t1\t1\t" + std::to_string(i + 1) + "\n";
  text += "bad\tp\t91.0\t0\t5\n";  // latitude out of range, line 101
  const auto raw = dataset::ingest(write_tmp("one_bad.tsv", text));
  CHECK(raw.checkins.size() == 100);
  REQUIRE(raw.malformed_checkin_lines.size() == 1);
  CHECK(raw.malformed_checkin_lines[0] == 101);
}

TEST_CASE("ingest rejects files with over 1% malformed lines") {
  std::string text = "u1\tp1\t1\t1\t10\n";
  text += "u2\tp2\t200\t1\t10\n";   // bad latitude
  text += "u3\tp3\t1\t1\t0\n";      // non-positive timestamp
  for (int i = 0; i < 7; ++i) text += "u\tp\t1\t1\t5\n";
  try {
    dataset::ingest(write_tmp("two_bad.tsv", text));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2 of 10") != std::string::npos);
    CHECK(msg.find("lines 2, 3") != std::string::npos);
  }
}

TEST_CASE("ingest flags structural and bounds violations") {
  const auto p = write_tmp("mixed_bad.tsv", [] {
    std::string t;
    for (int i = 0; i < 600; ++i) t += "u\tp\t1\t1\t7\n";
    t += "only\tfour\tfields\t1\n";   // 601
    t += "u\tp\tnope\t1\t7\n";        // 602
    t += "u\tp\t1\t-180.5\t7\n";      // 603
    t += "u\tp\t1\t1\t-3\n";          // 604
    t += "\tp\t1\t1\t7\n";            // 605 empty user id
    return t;
  }());
  const auto raw = dataset::ingest(p);
  CHECK(raw.checkins.size() == 600);
  CHECK(raw.malformed_checkin_lines == std::vector<std::size_t>{601, 602, 603, 604, 605});
}

TEST_CASE("ingest deduplicates social edges and keeps categories") {
  const auto ck = write_tmp("s.tsv", "u1\tp1\t1\t1\t10\nu2\tp1\t1\t1\t11\n");
  const auto so = write_tmp("s_social.tsv", "u1\tu2\nu2\tu1\nu1\tu2\nu3\tu3\n");
  const auto ca = write_tmp("s_cat.tsv", "p1\tfood\np1\tbars\np1\tfood\n");
  const auto raw = dataset::ingest(ck, so, ca);
  CHECK(raw.has_social);
  CHECK(raw.has_categories);
  REQUIRE(raw.social.size() == 1);
  CHECK(raw.social[0] == std::pair<std::string, std::string>{"u1", "u2"});
  CHECK(raw.duplicate_social_edges == 3);  // two repeats plus one self-edge
  CHECK(raw.categories.size() == 2);
}

TEST_CASE("preprocess removes POIs then users, one pass each") {
  // u1 visits P and Q, u2 visits P. POI filter (min 2 visits) kills Q,
  // after which both users fall below 2 remaining check-ins.
  RawDataset raw;
  raw.checkins = {
      {"u1", "P", 1, 1, 10}, {"u1", "Q", 1, 1, 20}, {"u2", "P", 1, 1, 30}};
  CHECK_THROWS_AS(dataset::preprocess(raw, 2, 2), DataError);
}

TEST_CASE("preprocess toy corpus dies entirely under paper thresholds") {
  // 20 check-ins across 12 POIs visited by u1 only: every POI is below 10
  // visits, so the POI pass empties u1's profile and the user pass drops u1.
  RawDataset raw;
  int ts = 1;
  for (int p = 0; p < 12; ++p) {
    const std::string poi = "poi" + std::to_string(p);
    raw.checkins.push_back({"u1", poi, 1, 1, ts++});
  }
  for (int extra = 0; extra < 8; ++extra)
    raw.checkins.push_back({"u1", "poi" + std::to_string(extra), 1, 1, ts++});
  CHECK(raw.checkins.size() == 20);
  CHECK_THROWS_AS(dataset::preprocess(raw, 15, 10), DataError);
}

TEST_CASE("preprocess is a no-op above thresholds and aggregates counts") {
  RawDataset raw;
  raw.checkins = {{"ub", "px", 1, 1, 10}, {"ua", "px", 1, 1, 20}, {"ua", "py", 2, 2, 30},
                  {"ua", "px", 1, 1, 40}, {"ub", "py", 2, 2, 50}};
  const auto store = dataset::preprocess(raw, 1, 1);
  REQUIRE(store.n_users() == 2);
  REQUIRE(store.n_pois() == 2);
  // identifiers sorted lexicographically
  CHECK(store.user_ids == std::vector<std::string>{"ua", "ub"});
  CHECK(store.poi_ids == std::vector<std::string>{"px", "py"});
  CHECK(store.n_checkins() == 5);
  CHECK(store.count(0, 0) == 2);  // ua at px
  CHECK(store.count(0, 1) == 1);
  CHECK(store.count(1, 0) == 1);
  CHECK(store.count(1, 1) == 1);
  // events time-ordered per user
  CHECK(store.events[0][0].when == 20);
  CHECK(store.events[0][2].when == 40);
}

TEST_CASE("preprocess restricts social edges and categories to survivors") {
  RawDataset raw;
  raw.has_social = true;
  raw.has_categories = true;
  for (int i = 0; i < 3; ++i) raw.checkins.push_back({"u1", "P", 1, 1, 10 + i});
  for (int i = 0; i < 3; ++i) raw.checkins.push_back({"u2", "P", 1, 1, 20 + i});
  raw.checkins.push_back({"u3", "Q", 1, 1, 30});  // Q dies, then u3
  raw.social = {{"u1", "u2"}, {"u1", "u3"}};
  raw.categories = {{"P", "food"}, {"Q", "bars"}};
  const auto store = dataset::preprocess(raw, 2, 2);
  REQUIRE(store.n_users() == 2);
  CHECK(store.n_social_links() == 1);
  CHECK(store.friends[0] == std::vector<UserIdx>{1});
  CHECK(store.friends[1] == std::vector<UserIdx>{0});
  // the dead POI's category vanishes with it
  CHECK(store.category_names == std::vector<std::string>{"food"});
}

TEST_CASE("temporal split follows the 70/10/20 rule on events") {
  RawDataset raw;
  for (int i = 1; i <= 10; ++i)
    raw.checkins.push_back({"u", "poi" + std::to_string(i), 1, 1, i});
  auto store = dataset::temporal_split(dataset::preprocess(raw, 1, 1), 0.7, 0.1);
  REQUIRE(store.has_split);
  const UserSplit& s = store.split[0];
  CHECK_FALSE(s.degenerate);
  CHECK(s.n_train_events == 7);
  CHECK(s.n_valid_events == 1);
  CHECK(s.train.size() == 7);
  CHECK(s.validation.size() == 1);
  CHECK(s.test.size() == 2);
  CHECK(s.train_end_when == 7);
  CHECK(s.valid_end_when == 8);

  const auto label = [&](const std::vector<PoiIdx>& part) {
    std::set<std::string> ids;
    for (PoiIdx p : part) ids.insert(store.poi_ids[static_cast<std::size_t>(p)]);
    return ids;
  };
  CHECK(label(s.train) ==
        std::set<std::string>{"poi1", "poi2", "poi3", "poi4", "poi5", "poi6", "poi7"});
  CHECK(label(s.validation) == std::set<std::string>{"poi8"});
  CHECK(label(s.test) == std::set<std::string>{"poi9", "poi10"});
}

TEST_CASE("temporal split keeps sparse users in train only") {
  RawDataset raw;
  raw.checkins = {{"u", "P", 1, 1, 5}, {"u", "P", 1, 1, 9}, {"u", "Q", 1, 1, 12}};
  auto store = dataset::temporal_split(dataset::preprocess(raw, 1, 1), 0.7, 0.1);
  const UserSplit& s = store.split[0];
  CHECK(s.degenerate);  // 2 distinct POIs
  CHECK(s.train.size() == 2);
  CHECK(s.validation.empty());
  CHECK(s.test.empty());
  CHECK(s.n_train_events == 3);
}

TEST_CASE("temporal split breaks timestamp ties by POI identifier") {
  RawDataset raw;
  const char* pois[10] = {"a", "b", "c", "d", "e", "f", "zz", "aa", "x", "y"};
  const std::int64_t ts[10] = {1, 2, 3, 4, 5, 6, 7, 7, 9, 10};
  for (int i = 0; i < 10; ++i) raw.checkins.push_back({"u", pois[i], 1, 1, ts[i]});
  auto store = dataset::temporal_split(dataset::preprocess(raw, 1, 1), 0.7, 0.1);
  const UserSplit& s = store.split[0];
  const auto has = [&](const std::vector<PoiIdx>& part, const std::string& id) {
    const auto idx = store.poi_index(id);
    REQUIRE(idx.has_value());
    return std::find(part.begin(), part.end(), *idx) != part.end();
  };
  // at t=7 both "aa" and "zz" check in; "aa" sorts first and lands in train
  CHECK(has(s.train, "aa"));
  CHECK(has(s.validation, "zz"));
}

TEST_CASE("temporal split assigns revisited POIs to their earliest window") {
  RawDataset raw;
  // P is visited in the train window and again in the test window
  raw.checkins = {{"u", "P", 1, 1, 1},  {"u", "a", 1, 1, 2}, {"u", "b", 1, 1, 3},
                  {"u", "c", 1, 1, 4},  {"u", "d", 1, 1, 5}, {"u", "e", 1, 1, 6},
                  {"u", "f", 1, 1, 7},  {"u", "g", 1, 1, 8}, {"u", "P", 1, 1, 9},
                  {"u", "h", 1, 1, 10}};
  auto store = dataset::temporal_split(dataset::preprocess(raw, 1, 1), 0.7, 0.1);
  const UserSplit& s = store.split[0];
  const auto p_idx = *store.poi_index("P");
  CHECK(std::find(s.train.begin(), s.train.end(), p_idx) != s.train.end());
  CHECK(std::find(s.test.begin(), s.test.end(), p_idx) == s.test.end());
  // disjoint partitions covering all distinct POIs
  std::set<PoiIdx> all;
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    for (PoiIdx p : *part) CHECK(all.insert(p).second);
  }
  CHECK(all.size() == store.counts[0].size());
}

TEST_CASE("temporal split partitions are disjoint and exhaustive on random data") {
  util::Rng rng(77);
  RawDataset raw;
  for (int u = 0; u < 40; ++u) {
    const int n = 3 + static_cast<int>(rng.next_below(30));
    for (int i = 0; i < n; ++i) {
      raw.checkins.push_back({"user" + std::to_string(u),
                              "poi" + std::to_string(rng.next_below(60)), 1, 1,
                              static_cast<std::int64_t>(1 + rng.next_below(100000))});
    }
  }
  auto store = dataset::temporal_split(dataset::preprocess(raw, 1, 1), 0.7, 0.1);
  for (std::size_t u = 0; u < store.n_users(); ++u) {
    const UserSplit& s = store.split[u];
    std::set<PoiIdx> all;
    for (const auto* part : {&s.train, &s.validation, &s.test}) {
      for (PoiIdx p : *part) {
        CHECK(all.insert(p).second);
        CHECK(store.count(static_cast<UserIdx>(u), p) >= 1);
      }
    }
    CHECK(all.size() == store.counts[u].size());
    // temporal ordering of the event windows
    const auto& ev = store.events[u];
    if (!s.degenerate && s.n_valid_events > 0) {
      CHECK(ev[s.n_train_events - 1].when <= ev[s.n_train_events].when);
    }
    if (!s.degenerate && s.n_train_events + s.n_valid_events < ev.size()) {
      CHECK(ev[s.n_train_events + s.n_valid_events - 1].when <=
            ev[s.n_train_events + s.n_valid_events].when);
    }
  }
}

TEST_CASE("preprocess is idempotent on stable corpora") {
  util::Rng rng(5);
  RawDataset raw;
  for (int u = 0; u < 30; ++u) {
    for (int i = 0; i < 20; ++i) {
      raw.checkins.push_back({"user" + std::to_string(u), "poi" + std::to_string(rng.next_below(10)),
                              1, 1, static_cast<std::int64_t>(1 + rng.next_below(1000))});
    }
  }
  const auto once = dataset::preprocess(raw, 5, 5);
  const auto twice = dataset::preprocess(store_to_raw(once), 5, 5);
  CHECK(once.user_ids == twice.user_ids);
  CHECK(once.poi_ids == twice.poi_ids);
  CHECK(once.counts == twice.counts);
}

TEST_CASE("sample_users keeps floor(fraction * n) users deterministically") {
  RawDataset raw;
  for (int u = 0; u < 1000; ++u) {
    raw.checkins.push_back({"user" + std::to_string(u), "P", 1, 1, 10 + u});
    raw.checkins.push_back({"user" + std::to_string(u), "Q", 1, 1, 20 + u});
  }
  const auto store = dataset::preprocess(raw, 1, 1);
  REQUIRE(store.n_users() == 1000);

  const auto half = dataset::sample_users(store, 0.5, 99);
  CHECK(half.n_users() == 500);
  CHECK(half.n_pois() == store.n_pois());  // item universe unchanged

  const auto again = dataset::sample_users(store, 0.5, 99);
  CHECK(half.user_ids == again.user_ids);

  const auto other = dataset::sample_users(store, 0.5, 100);
  CHECK(half.user_ids != other.user_ids);

  const auto full = dataset::sample_users(store, 1.0, 1);
  CHECK(full.user_ids == store.user_ids);
  CHECK(full.counts == store.counts);

  CHECK_THROWS_AS(dataset::sample_users(store, 0.0001, 1), DataError);
  CHECK_THROWS_AS(dataset::sample_users(store, 1.5, 1), ConfigError);
}

TEST_CASE("sample_users remaps friendships") {
  RawDataset raw;
  raw.has_social = true;
  for (int u = 0; u < 10; ++u) {
    raw.checkins.push_back({"u" + std::to_string(u), "P", 1, 1, 10 + u});
  }
  for (int u = 0; u + 1 < 10; ++u)
    raw.social.emplace_back("u" + std::to_string(u), "u" + std::to_string(u + 1));
  const auto store = dataset::preprocess(raw, 1, 1);
  const auto sampled = dataset::sample_users(store, 0.5, 3);
  REQUIRE(sampled.n_users() == 5);
  for (std::size_t u = 0; u < sampled.n_users(); ++u) {
    for (const UserIdx f : sampled.friends[u]) {
      REQUIRE(static_cast<std::size_t>(f) < sampled.n_users());
      // symmetry preserved
      const auto& back = sampled.friends[static_cast<std::size_t>(f)];
      CHECK(std::find(back.begin(), back.end(), static_cast<UserIdx>(u)) != back.end());
    }
  }
}

TEST_CASE("stats reports exact counts and computed density") {
  RawDataset raw;
  raw.checkins = {{"u", "P", 1, 1, 5}};
  const auto store = dataset::preprocess(raw, 1, 1);
  const auto st = dataset::stats(store);
  CHECK(st.n_users == 1);
  CHECK(st.n_pois == 1);
  CHECK(st.n_checkins == 1);
  CHECK(st.density == 1.0);
  CHECK_FALSE(st.n_categories.has_value());

  util::Rng rng(11);
  RawDataset big;
  big.has_social = true;
  big.has_categories = true;
  for (int u = 0; u < 25; ++u)
    for (int i = 0; i < 12; ++i)
      big.checkins.push_back({"user" + std::to_string(u), "poi" + std::to_string(rng.next_below(40)),
                              1, 1, static_cast<std::int64_t>(1 + rng.next_below(500))});
  big.social = {{"user0", "user1"}, {"user2", "user3"}};
  big.categories = {{"poi0", "food"}, {"poi1", "food"}, {"poi2", "bars"}};
  const auto bst = dataset::stats(dataset::preprocess(big, 1, 1));
  CHECK(bst.density * static_cast<double>(bst.n_users) * static_cast<double>(bst.n_pois) ==
        doctest::Approx(static_cast<double>(bst.n_checkins)).epsilon(1e-12));
  CHECK(bst.n_social_links == 2);
  REQUIRE(bst.n_categories.has_value());
  CHECK(*bst.n_categories == 2);
}

TEST_CASE("store binary round-trip is exact") {
  util::Rng rng(21);
  RawDataset raw;
  raw.has_social = true;
  raw.has_categories = true;
  for (int u = 0; u < 15; ++u) {
    const int n = 4 + static_cast<int>(rng.next_below(10));
    for (int i = 0; i < n; ++i) {
      raw.checkins.push_back({"user" + std::to_string(u), "poi" + std::to_string(rng.next_below(20)),
                              rng.uniform(-50, 50), rng.uniform(-100, 100),
                              static_cast<std::int64_t>(1 + rng.next_below(9999))});
    }
  }
  raw.social = {{"user0", "user3"}, {"user1", "user2"}};
  raw.categories = {{"poi0", "food"}, {"poi3", "bars"}, {"poi3", "food"}};
  auto store = dataset::temporal_split(dataset::preprocess(raw, 1, 1), 0.7, 0.1);

  const auto path = tmp_dir() / "roundtrip.bin";
  dataset::save_store(store, path);
  const auto loaded = dataset::load_store(path);

  CHECK(loaded.user_ids == store.user_ids);
  CHECK(loaded.poi_ids == store.poi_ids);
  CHECK(loaded.category_names == store.category_names);
  CHECK(loaded.counts == store.counts);
  CHECK(loaded.friends == store.friends);
  CHECK(loaded.has_social == store.has_social);
  CHECK(loaded.has_categories == store.has_categories);
  REQUIRE(loaded.has_split);
  REQUIRE(loaded.events.size() == store.events.size());
  for (std::size_t u = 0; u < store.events.size(); ++u) {
    REQUIRE(loaded.events[u].size() == store.events[u].size());
    for (std::size_t i = 0; i < store.events[u].size(); ++i) {
      CHECK(loaded.events[u][i].poi == store.events[u][i].poi);
      CHECK(loaded.events[u][i].when == store.events[u][i].when);
    }
    CHECK(loaded.split[u].train == store.split[u].train);
    CHECK(loaded.split[u].validation == store.split[u].validation);
    CHECK(loaded.split[u].test == store.split[u].test);
    CHECK(loaded.split[u].n_train_events == store.split[u].n_train_events);
    CHECK(loaded.split[u].n_valid_events == store.split[u].n_valid_events);
    CHECK(loaded.split[u].train_end_when == store.split[u].train_end_when);
    CHECK(loaded.split[u].valid_end_when == store.split[u].valid_end_when);
    CHECK(loaded.split[u].degenerate == store.split[u].degenerate);
  }
  for (std::size_t p = 0; p < store.n_pois(); ++p) {
    CHECK(loaded.poi_meta[p].lat == store.poi_meta[p].lat);
    CHECK(loaded.poi_meta[p].lon == store.poi_meta[p].lon);
    CHECK(loaded.poi_meta[p].categories == store.poi_meta[p].categories);
  }

  CHECK_THROWS_AS(dataset::load_store(write_tmp("bad.bin", "NOPE")), DataError);
}

TEST_CASE("index maps are exported alongside artifacts") {
  RawDataset raw;
  raw.checkins = {{"ub", "py", 1, 1, 5}, {"ua", "px", 1, 1, 6}};
  const auto store = dataset::preprocess(raw, 1, 1);
  const auto dir = tmp_dir() / "maps";
  dataset::export_index_maps(store, dir);
  CHECK(util::read_file(dir / "user_index.csv") == "user_id,index\nua,0\nub,1\n");
  CHECK(util::read_file(dir / "poi_index.csv") == "poi_id,index\npx,0\npy,1\n");
}
