#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace poibench {

using UserIdx = std::int32_t;
using PoiIdx = std::int32_t;

/// One parsed check-in line, identifiers still in their original string form.
struct CheckIn {
  std::string user;
  std::string poi;
  double lat = 0.0;
  double lon = 0.0;
  std::int64_t when = 0;
};

/// Output of ingest(): everything parsed, nothing filtered. Malformed lines
/// are recorded (per file, 1-based) rather than silently dropped.
struct RawDataset {
  std::vector<CheckIn> checkins;
  std::vector<std::pair<std::string, std::string>> social;      // normalized a < b, deduplicated
  std::vector<std::pair<std::string, std::string>> categories;  // (poi, category), deduplicated
  bool has_social = false;
  bool has_categories = false;
  std::vector<std::size_t> malformed_checkin_lines;
  std::vector<std::size_t> malformed_social_lines;
  std::vector<std::size_t> malformed_category_lines;
  std::size_t duplicate_social_edges = 0;
};

struct Event {
  PoiIdx poi = 0;
  std::int64_t when = 0;
};

struct PoiMeta {
  double lat = 0.0;
  double lon = 0.0;
  std::vector<std::int32_t> categories;  // sorted category indices, may be empty
};

/// Per-user temporal split. Partitions hold distinct POI indices (sorted);
/// the event prefix lengths delimit the train / validation / test windows in
/// the user's time-ordered event list.
struct UserSplit {
  std::vector<PoiIdx> train;
  std::vector<PoiIdx> validation;
  std::vector<PoiIdx> test;
  std::uint32_t n_train_events = 0;
  std::uint32_t n_valid_events = 0;
  std::int64_t train_end_when = 0;
  std::int64_t valid_end_when = 0;
  bool degenerate = false;  // < 3 distinct POIs: everything kept in train
};

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_pois = 0;
  std::size_t n_checkins = 0;
  std::size_t n_social_links = 0;
  std::optional<std::size_t> n_categories;
  double density = 0.0;
};

struct SlateEntry {
  PoiIdx poi = 0;
  double score = 0.0;
};

/// Ordered top-k recommendations for one user: scores non-increasing, no
/// duplicates, nothing from the user's train or validation partitions.
struct RankedSlate {
  UserIdx user = 0;
  std::vector<SlateEntry> entries;
  bool empty_candidates = false;  // candidate set was empty, slate left blank
};

/// Dense, immutable-after-construction interaction data. String identifiers
/// are densified to contiguous indices; both id vectors are lexicographically
/// sorted, so index order doubles as identifier order for tie-breaking.
struct InteractionStore {
  std::vector<std::string> user_ids;
  std::vector<std::string> poi_ids;
  std::vector<std::string> category_names;

  std::vector<std::vector<Event>> events;  // per user, sorted by (when, poi)
  std::vector<std::vector<std::pair<PoiIdx, std::uint32_t>>> counts;  // per user, sorted by poi
  std::vector<std::vector<UserIdx>> friends;  // sorted adjacency lists
  std::vector<PoiMeta> poi_meta;

  bool has_social = false;
  bool has_categories = false;

  bool has_split = false;
  std::vector<UserSplit> split;  // size n_users() when has_split

  std::size_t n_users() const { return user_ids.size(); }
  std::size_t n_pois() const { return poi_ids.size(); }

  std::size_t n_checkins() const {
    std::size_t total = 0;
    for (const auto& ev : events) total += ev.size();
    return total;
  }

  std::size_t n_social_links() const {
    std::size_t deg = 0;
    for (const auto& adj : friends) deg += adj.size();
    return deg / 2;
  }

  std::uint32_t count(UserIdx u, PoiIdx p) const {
    const auto& row = counts[static_cast<std::size_t>(u)];
    auto it = std::lower_bound(row.begin(), row.end(), p,
                               [](const auto& a, PoiIdx b) { return a.first < b; });
    return (it != row.end() && it->first == p) ? it->second : 0u;
  }

  std::optional<UserIdx> user_index(std::string_view id) const {
    auto it = std::lower_bound(user_ids.begin(), user_ids.end(), id);
    if (it == user_ids.end() || *it != id) return std::nullopt;
    return static_cast<UserIdx>(it - user_ids.begin());
  }

  std::optional<PoiIdx> poi_index(std::string_view id) const {
    auto it = std::lower_bound(poi_ids.begin(), poi_ids.end(), id);
    if (it == poi_ids.end() || *it != id) return std::nullopt;
    return static_cast<PoiIdx>(it - poi_ids.begin());
  }

  std::size_t n_train_pairs() const {
    std::size_t total = 0;
    for (const auto& s : split) total += s.train.size();
    return total;
  }
};

}  // namespace poibench
