#include "poibench/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "poibench/errors.hpp"
#include "poibench/util/binio.hpp"
#include "poibench/util/csv.hpp"
#include "poibench/util/io.hpp"
#include "poibench/util/rng.hpp"

namespace poibench::dataset {

namespace {

bool parse_double(std::string_view s, double& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_i64(std::string_view s, std::int64_t& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

std::string line_list(const std::vector<std::size_t>& lines) {
  std::ostringstream out;
  const std::size_t shown = std::min<std::size_t>(lines.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) {
    if (i) out << ", ";
    out << lines[i];
  }
  if (lines.size() > shown) out << " and " << (lines.size() - shown) << " more";
  return out.str();
}

void check_malformed_ratio(const std::filesystem::path& file, std::size_t total,
                           const std::vector<std::size_t>& bad) {
  if (total == 0 || bad.empty()) return;
  if (static_cast<double>(bad.size()) > 0.01 * static_cast<double>(total)) {
    std::ostringstream msg;
    msg << file.string() << ": " << bad.size() << " of " << total
        << " lines malformed (over the 1% limit); lines " << line_list(bad);
    throw DataError(msg.str());
  }
}

}  // namespace

RawDataset ingest(const std::filesystem::path& checkin_file,
                  const std::optional<std::filesystem::path>& social_file,
                  const std::optional<std::filesystem::path>& category_file) {
  RawDataset raw;

  {
    const std::string text = util::read_file(checkin_file);
    const char delim = util::detect_delimiter(text);
    std::size_t total = 0;
    util::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
      line = util::trim(line);
      if (line.empty()) return;
      ++total;
      const auto fields = util::split_fields(line, delim);
      CheckIn c;
      if (fields.size() != 5 || fields[0].empty() || fields[1].empty() ||
          !parse_double(fields[2], c.lat) || !parse_double(fields[3], c.lon) ||
          !parse_i64(fields[4], c.when) || c.lat < -90.0 || c.lat > 90.0 || c.lon < -180.0 ||
          c.lon > 180.0 || c.when <= 0) {
        raw.malformed_checkin_lines.push_back(line_no);
        return;
      }
      c.user = std::string(fields[0]);
      c.poi = std::string(fields[1]);
      raw.checkins.push_back(std::move(c));
    });
    check_malformed_ratio(checkin_file, total, raw.malformed_checkin_lines);
  }

  if (social_file) {
    raw.has_social = true;
    const std::string text = util::read_file(*social_file);
    const char delim = util::detect_delimiter(text);
    std::size_t total = 0;
    std::unordered_set<std::string> seen;
    util::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
      line = util::trim(line);
      if (line.empty()) return;
      ++total;
      const auto fields = util::split_fields(line, delim);
      if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
        raw.malformed_social_lines.push_back(line_no);
        return;
      }
      std::string a(fields[0]), b(fields[1]);
      if (b < a) std::swap(a, b);
      // Self-edges carry no information for an undirected simple graph;
      // folded into the duplicate count rather than dropped silently.
      if (a == b || !seen.insert(a + "\x1f" + b).second) {
        ++raw.duplicate_social_edges;
        return;
      }
      raw.social.emplace_back(std::move(a), std::move(b));
    });
    check_malformed_ratio(*social_file, total, raw.malformed_social_lines);
  }

  if (category_file) {
    raw.has_categories = true;
    const std::string text = util::read_file(*category_file);
    const char delim = util::detect_delimiter(text);
    std::size_t total = 0;
    std::unordered_set<std::string> seen;
    util::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
      line = util::trim(line);
      if (line.empty()) return;
      ++total;
      const auto fields = util::split_fields(line, delim);
      if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
        raw.malformed_category_lines.push_back(line_no);
        return;
      }
      std::string poi(fields[0]), cat(fields[1]);
      if (!seen.insert(poi + "\x1f" + cat).second) return;
      raw.categories.emplace_back(std::move(poi), std::move(cat));
    });
    check_malformed_ratio(*category_file, total, raw.malformed_category_lines);
  }

  return raw;
}

InteractionStore preprocess(const RawDataset& raw, int min_user_checkins, int min_poi_visits) {
  if (min_user_checkins < 1 || min_poi_visits < 1)
    throw ConfigError("preprocess thresholds must be >= 1");

  std::unordered_map<std::string_view, std::size_t> poi_total;
  for (const auto& c : raw.checkins) ++poi_total[c.poi];

  const auto poi_survives = [&](std::string_view poi) {
    auto it = poi_total.find(poi);
    return it != poi_total.end() && it->second >= static_cast<std::size_t>(min_poi_visits);
  };

  std::unordered_map<std::string_view, std::size_t> user_remaining;
  for (const auto& c : raw.checkins)
    if (poi_survives(c.poi)) ++user_remaining[c.user];

  InteractionStore store;
  for (const auto& [poi, total] : poi_total)
    if (total >= static_cast<std::size_t>(min_poi_visits)) store.poi_ids.emplace_back(poi);
  for (const auto& [user, remaining] : user_remaining)
    if (remaining >= static_cast<std::size_t>(min_user_checkins))
      store.user_ids.emplace_back(user);
  std::sort(store.poi_ids.begin(), store.poi_ids.end());
  std::sort(store.user_ids.begin(), store.user_ids.end());

  if (store.user_ids.empty() || store.poi_ids.empty()) {
    std::ostringstream msg;
    msg << "preprocessing removed everything: " << raw.checkins.size() << " raw check-ins, "
        << store.poi_ids.size() << " POIs at >= " << min_poi_visits << " visits, "
        << store.user_ids.size() << " users at >= " << min_user_checkins
        << " remaining check-ins";
    throw DataError(msg.str());
  }

  std::unordered_map<std::string_view, UserIdx> user_of;
  std::unordered_map<std::string_view, PoiIdx> poi_of;
  user_of.reserve(store.user_ids.size());
  poi_of.reserve(store.poi_ids.size());
  for (std::size_t i = 0; i < store.user_ids.size(); ++i)
    user_of.emplace(store.user_ids[i], static_cast<UserIdx>(i));
  for (std::size_t i = 0; i < store.poi_ids.size(); ++i)
    poi_of.emplace(store.poi_ids[i], static_cast<PoiIdx>(i));

  store.events.resize(store.user_ids.size());
  store.poi_meta.resize(store.poi_ids.size());

  std::vector<bool> coord_set(store.poi_ids.size(), false);
  for (const auto& c : raw.checkins) {
    const auto pit = poi_of.find(c.poi);
    if (pit == poi_of.end()) continue;
    // POI coordinates come from its first appearance in file order,
    // independent of which users survive.
    if (!coord_set[static_cast<std::size_t>(pit->second)]) {
      coord_set[static_cast<std::size_t>(pit->second)] = true;
      store.poi_meta[static_cast<std::size_t>(pit->second)].lat = c.lat;
      store.poi_meta[static_cast<std::size_t>(pit->second)].lon = c.lon;
    }
    const auto uit = user_of.find(c.user);
    if (uit == user_of.end()) continue;
    store.events[static_cast<std::size_t>(uit->second)].push_back(Event{pit->second, c.when});
  }

  for (auto& ev : store.events) {
    std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) {
      return a.when != b.when ? a.when < b.when : a.poi < b.poi;
    });
  }

  store.counts.resize(store.user_ids.size());
  for (std::size_t u = 0; u < store.events.size(); ++u) {
    auto& row = store.counts[u];
    for (const Event& e : store.events[u]) row.emplace_back(e.poi, 1u);
    std::sort(row.begin(), row.end());
    std::size_t w = 0;
    for (std::size_t r = 0; r < row.size(); ++r) {
      if (w > 0 && row[w - 1].first == row[r].first) {
        row[w - 1].second += row[r].second;
      } else {
        row[w++] = row[r];
      }
    }
    row.resize(w);
  }

  store.has_social = raw.has_social;
  store.friends.resize(store.user_ids.size());
  for (const auto& [a, b] : raw.social) {
    const auto ia = user_of.find(a);
    const auto ib = user_of.find(b);
    if (ia == user_of.end() || ib == user_of.end()) continue;
    store.friends[static_cast<std::size_t>(ia->second)].push_back(ib->second);
    store.friends[static_cast<std::size_t>(ib->second)].push_back(ia->second);
  }
  for (auto& adj : store.friends) std::sort(adj.begin(), adj.end());

  store.has_categories = raw.has_categories;
  if (raw.has_categories) {
    std::unordered_map<std::string_view, std::int32_t> cat_of;
    for (const auto& [poi, cat] : raw.categories) {
      if (poi_of.find(poi) == poi_of.end()) continue;
      if (cat_of.find(cat) == cat_of.end()) {
        cat_of.emplace(cat, 0);
        store.category_names.emplace_back(cat);
      }
    }
    std::sort(store.category_names.begin(), store.category_names.end());
    for (std::size_t i = 0; i < store.category_names.size(); ++i)
      cat_of[store.category_names[i]] = static_cast<std::int32_t>(i);
    for (const auto& [poi, cat] : raw.categories) {
      const auto pit = poi_of.find(poi);
      if (pit == poi_of.end()) continue;
      store.poi_meta[static_cast<std::size_t>(pit->second)].categories.push_back(cat_of[cat]);
    }
    for (auto& meta : store.poi_meta) {
      std::sort(meta.categories.begin(), meta.categories.end());
      meta.categories.erase(std::unique(meta.categories.begin(), meta.categories.end()),
                            meta.categories.end());
    }
  }

  return store;
}

InteractionStore temporal_split(InteractionStore store, double train_frac, double valid_frac) {
  if (!(train_frac > 0.0) || !(valid_frac > 0.0) || !(train_frac + valid_frac < 1.0))
    throw ConfigError("split fractions must be positive with train + validation < 1");

  const double test_frac = 1.0 - train_frac - valid_frac;
  store.split.assign(store.n_users(), UserSplit{});
  store.has_split = true;

  for (std::size_t u = 0; u < store.n_users(); ++u) {
    const auto& ev = store.events[u];
    UserSplit& s = store.split[u];
    const std::size_t n = ev.size();
    if (n == 0) {
      s.degenerate = true;
      continue;
    }

    std::size_t n_train;
    std::size_t n_test;
    if (store.counts[u].size() < 3) {
      s.degenerate = true;
      n_train = n;
      n_test = 0;
    } else {
      n_train = std::min(n, static_cast<std::size_t>(
                                std::ceil(train_frac * static_cast<double>(n) - 1e-9)));
      n_test = static_cast<std::size_t>(
          std::floor(test_frac * static_cast<double>(n) + 1e-9));
      if (n_train + n_test > n) n_test = n - n_train;
    }
    const std::size_t n_valid = n - n_train - n_test;

    s.n_train_events = static_cast<std::uint32_t>(n_train);
    s.n_valid_events = static_cast<std::uint32_t>(n_valid);
    s.train_end_when = n_train > 0 ? ev[n_train - 1].when : 0;
    s.valid_end_when = n_valid > 0 ? ev[n_train + n_valid - 1].when : s.train_end_when;

    std::unordered_set<PoiIdx> seen;
    seen.reserve(store.counts[u].size() * 2);
    for (std::size_t i = 0; i < n; ++i) {
      if (!seen.insert(ev[i].poi).second) continue;
      if (i < n_train) {
        s.train.push_back(ev[i].poi);
      } else if (i < n_train + n_valid) {
        s.validation.push_back(ev[i].poi);
      } else {
        s.test.push_back(ev[i].poi);
      }
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.validation.begin(), s.validation.end());
    std::sort(s.test.begin(), s.test.end());
  }
  return store;
}

InteractionStore sample_users(const InteractionStore& store, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ConfigError("sampling fraction must be in (0, 1]");
  const std::size_t n = store.n_users();
  const std::size_t keep =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  if (keep == 0) throw DataError("sampling fraction yields 0 users");
  if (keep >= n) return store;

  std::vector<UserIdx> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  util::Rng rng(seed);
  rng.shuffle(perm);
  perm.resize(keep);
  std::sort(perm.begin(), perm.end());

  std::vector<UserIdx> new_index(n, -1);
  for (std::size_t i = 0; i < perm.size(); ++i)
    new_index[static_cast<std::size_t>(perm[i])] = static_cast<UserIdx>(i);

  InteractionStore out;
  out.poi_ids = store.poi_ids;
  out.category_names = store.category_names;
  out.poi_meta = store.poi_meta;
  out.has_social = store.has_social;
  out.has_categories = store.has_categories;
  out.has_split = store.has_split;

  out.user_ids.reserve(keep);
  out.events.reserve(keep);
  out.counts.reserve(keep);
  out.friends.reserve(keep);
  if (store.has_split) out.split.reserve(keep);
  for (const UserIdx old : perm) {
    const auto o = static_cast<std::size_t>(old);
    out.user_ids.push_back(store.user_ids[o]);
    out.events.push_back(store.events[o]);
    out.counts.push_back(store.counts[o]);
    std::vector<UserIdx> adj;
    for (const UserIdx f : store.friends[o]) {
      if (new_index[static_cast<std::size_t>(f)] >= 0)
        adj.push_back(new_index[static_cast<std::size_t>(f)]);
    }
    out.friends.push_back(std::move(adj));
    if (store.has_split) out.split.push_back(store.split[o]);
  }
  return out;
}

DatasetStats stats(const InteractionStore& store) {
  if (store.n_users() == 0 || store.n_pois() == 0) throw DataError("stats of an empty store");
  DatasetStats st;
  st.n_users = store.n_users();
  st.n_pois = store.n_pois();
  st.n_checkins = store.n_checkins();
  st.n_social_links = store.n_social_links();
  if (store.has_categories) st.n_categories = store.category_names.size();
  st.density = static_cast<double>(st.n_checkins) /
               (static_cast<double>(st.n_users) * static_cast<double>(st.n_pois));
  return st;
}

namespace {

constexpr char kMagic[4] = {'P', 'B', 'I', 'S'};
constexpr std::uint32_t kVersion = 1;

using util::binio::put_f64;
using util::binio::put_i32;
using util::binio::put_i64;
using util::binio::put_str;
using util::binio::put_u32;
using util::binio::put_u64;

}  // namespace

void save_store(const InteractionStore& store, const std::filesystem::path& path) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u32(buf, (store.has_social ? 1u : 0u) | (store.has_categories ? 2u : 0u) |
                   (store.has_split ? 4u : 0u));
  put_u64(buf, store.user_ids.size());
  put_u64(buf, store.poi_ids.size());
  put_u64(buf, store.category_names.size());
  for (const auto& s : store.user_ids) put_str(buf, s);
  for (const auto& s : store.poi_ids) put_str(buf, s);
  for (const auto& s : store.category_names) put_str(buf, s);
  for (const auto& ev : store.events) {
    put_u64(buf, ev.size());
    for (const Event& e : ev) {
      put_i32(buf, e.poi);
      put_i64(buf, e.when);
    }
  }
  for (const auto& row : store.counts) {
    put_u64(buf, row.size());
    for (const auto& [poi, cnt] : row) {
      put_i32(buf, poi);
      put_u32(buf, cnt);
    }
  }
  for (const auto& adj : store.friends) {
    put_u64(buf, adj.size());
    for (const UserIdx f : adj) put_i32(buf, f);
  }
  for (const auto& meta : store.poi_meta) {
    put_f64(buf, meta.lat);
    put_f64(buf, meta.lon);
    put_u64(buf, meta.categories.size());
    for (const std::int32_t c : meta.categories) put_i32(buf, c);
  }
  if (store.has_split) {
    for (const auto& s : store.split) {
      for (const auto* part : {&s.train, &s.validation, &s.test}) {
        put_u64(buf, part->size());
        for (const PoiIdx p : *part) put_i32(buf, p);
      }
      put_u32(buf, s.n_train_events);
      put_u32(buf, s.n_valid_events);
      put_i64(buf, s.train_end_when);
      put_i64(buf, s.valid_end_when);
      buf.push_back(s.degenerate ? '\1' : '\0');
    }
  }
  util::atomic_write_file(path, buf);
}

InteractionStore load_store(const std::filesystem::path& path) {
  const std::string buf = util::read_file(path);
  util::binio::Reader r{buf, "store"};
  r.need(4);
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw DataError("corrupt store file: bad magic in " + path.string());
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw DataError("unsupported store file version " + std::to_string(version));
  const std::uint32_t flags = r.u32();

  InteractionStore store;
  store.has_social = (flags & 1u) != 0;
  store.has_categories = (flags & 2u) != 0;
  store.has_split = (flags & 4u) != 0;
  const std::uint64_t n_users = r.u64();
  const std::uint64_t n_pois = r.u64();
  const std::uint64_t n_cats = r.u64();
  r.need((n_users + n_pois + n_cats) * 8);  // each id costs at least its length field
  store.user_ids.reserve(n_users);
  for (std::uint64_t i = 0; i < n_users; ++i) store.user_ids.push_back(r.str());
  store.poi_ids.reserve(n_pois);
  for (std::uint64_t i = 0; i < n_pois; ++i) store.poi_ids.push_back(r.str());
  store.category_names.reserve(n_cats);
  for (std::uint64_t i = 0; i < n_cats; ++i) store.category_names.push_back(r.str());
  store.events.resize(n_users);
  for (auto& ev : store.events) {
    ev.resize(r.count(12));
    for (Event& e : ev) {
      e.poi = r.i32();
      e.when = r.i64();
    }
  }
  store.counts.resize(n_users);
  for (auto& row : store.counts) {
    row.resize(r.count(8));
    for (auto& [poi, cnt] : row) {
      poi = r.i32();
      cnt = r.u32();
    }
  }
  store.friends.resize(n_users);
  for (auto& adj : store.friends) {
    adj.resize(r.count(4));
    for (UserIdx& f : adj) f = r.i32();
  }
  store.poi_meta.resize(n_pois);
  for (auto& meta : store.poi_meta) {
    meta.lat = r.f64();
    meta.lon = r.f64();
    meta.categories.resize(r.count(4));
    for (std::int32_t& c : meta.categories) c = r.i32();
  }
  if (store.has_split) {
    store.split.resize(n_users);
    for (auto& s : store.split) {
      for (auto* part : {&s.train, &s.validation, &s.test}) {
        part->resize(r.count(4));
        for (PoiIdx& p : *part) p = r.i32();
      }
      s.n_train_events = r.u32();
      s.n_valid_events = r.u32();
      s.train_end_when = r.i64();
      s.valid_end_when = r.i64();
      r.need(1);
      s.degenerate = buf[r.pos++] != '\0';
    }
  }
  return store;
}

void export_index_maps(const InteractionStore& store, const std::filesystem::path& dir) {
  std::string users = "user_id,index\n";
  for (std::size_t i = 0; i < store.user_ids.size(); ++i)
    users += store.user_ids[i] + "," + std::to_string(i) + "\n";
  util::atomic_write_file(dir / "user_index.csv", users);

  std::string pois = "poi_id,index\n";
  for (std::size_t i = 0; i < store.poi_ids.size(); ++i)
    pois += store.poi_ids[i] + "," + std::to_string(i) + "\n";
  util::atomic_write_file(dir / "poi_index.csv", pois);
}

}  // namespace poibench::dataset
