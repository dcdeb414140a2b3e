#include "poibench/profiling.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "poibench/errors.hpp"
#include "poibench/util/io.hpp"

namespace poibench::profiling {

const char* label(UserGroup g) {
  switch (g) {
    case UserGroup::very_inactive: return "very-inactive";
    case UserGroup::slightly_inactive: return "slightly-inactive";
    case UserGroup::slightly_active: return "slightly-active";
    case UserGroup::very_active: return "very-active";
  }
  return "?";
}

const char* label(ItemGroup g) {
  switch (g) {
    case ItemGroup::short_head: return "short-head";
    case ItemGroup::mid_tail: return "mid-tail";
    case ItemGroup::long_tail: return "long-tail";
  }
  return "?";
}

std::array<std::size_t, kUserGroups> GroupScheme::user_group_sizes() const {
  std::array<std::size_t, kUserGroups> sizes{};
  for (const UserGroup g : user_group) ++sizes[static_cast<std::size_t>(g)];
  return sizes;
}

std::array<std::size_t, kItemGroups> GroupScheme::item_group_sizes() const {
  std::array<std::size_t, kItemGroups> sizes{};
  for (const ItemGroup g : item_group) ++sizes[static_cast<std::size_t>(g)];
  return sizes;
}

std::optional<double> pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  if (n != ys.size() || n < 2) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<std::size_t> poi_totals(const InteractionStore& store) {
  std::vector<std::size_t> totals(store.n_pois(), 0);
  for (const auto& row : store.counts)
    for (const auto& [poi, cnt] : row) totals[static_cast<std::size_t>(poi)] += cnt;
  return totals;
}

// Descending by count, ties by identifier (= index) ascending.
std::vector<PoiIdx> popularity_order(const std::vector<std::size_t>& totals) {
  std::vector<PoiIdx> order(totals.size());
  for (std::size_t i = 0; i < totals.size(); ++i) order[i] = static_cast<PoiIdx>(i);
  std::sort(order.begin(), order.end(), [&](PoiIdx a, PoiIdx b) {
    const auto ca = totals[static_cast<std::size_t>(a)];
    const auto cb = totals[static_cast<std::size_t>(b)];
    return ca != cb ? ca > cb : a < b;
  });
  return order;
}

}  // namespace

std::vector<ItemGroup> segment_items(const InteractionStore& store,
                                     const std::array<double, 3>& shares) {
  if (store.n_pois() == 0) throw DataError("segment_items on an empty catalog");
  for (const double s : shares)
    if (!(s > 0.0)) throw ConfigError("item shares must be positive");
  if (std::abs(shares[0] + shares[1] + shares[2] - 1.0) > 1e-9)
    throw ConfigError("item shares must sum to 1");

  const auto totals = poi_totals(store);
  const auto order = popularity_order(totals);
  double total_mass = 0;
  for (const std::size_t c : totals) total_mass += static_cast<double>(c);
  if (total_mass <= 0.0) throw DataError("segment_items on a store with no check-ins");

  std::vector<ItemGroup> groups(store.n_pois(), ItemGroup::long_tail);
  double cum = 0;
  ItemGroup current = ItemGroup::short_head;
  for (const PoiIdx p : order) {
    if (current == ItemGroup::long_tail) break;
    groups[static_cast<std::size_t>(p)] = current;
    cum += static_cast<double>(totals[static_cast<std::size_t>(p)]);
    const double share = cum / total_mass;
    if (current == ItemGroup::short_head && share >= shares[0] - 1e-12)
      current = ItemGroup::mid_tail;
    if (current == ItemGroup::mid_tail && share >= shares[0] + shares[1] - 1e-12)
      current = ItemGroup::long_tail;
  }
  return groups;
}

std::vector<UserGroup> segment_users(const InteractionStore& store,
                                     const std::array<std::uint32_t, 3>& thresholds) {
  if (!(thresholds[0] < thresholds[1] && thresholds[1] < thresholds[2]))
    throw ConfigError("user thresholds must be strictly increasing");
  std::vector<UserGroup> groups(store.n_users());
  for (std::size_t u = 0; u < store.n_users(); ++u) {
    const std::size_t n = store.events[u].size();
    if (n < thresholds[0]) {
      groups[u] = UserGroup::very_inactive;
    } else if (n < thresholds[1]) {
      groups[u] = UserGroup::slightly_inactive;
    } else if (n < thresholds[2]) {
      groups[u] = UserGroup::slightly_active;
    } else {
      groups[u] = UserGroup::very_active;
    }
  }
  return groups;
}

GroupScheme build_scheme(const InteractionStore& store,
                         const std::array<std::uint32_t, 3>& user_thresholds,
                         const std::array<double, 3>& item_shares) {
  GroupScheme scheme;
  scheme.user_thresholds = user_thresholds;
  scheme.item_shares = item_shares;
  scheme.user_group = segment_users(store, user_thresholds);
  scheme.item_group = segment_items(store, item_shares);
  return scheme;
}

ProfileStats profile_popularity(const InteractionStore& store, const GroupScheme& scheme) {
  const auto totals = poi_totals(store);
  ProfileStats stats;
  stats.per_user.resize(store.n_users());
  std::vector<double> sizes, populars, means;
  sizes.reserve(store.n_users());
  populars.reserve(store.n_users());
  means.reserve(store.n_users());
  for (std::size_t u = 0; u < store.n_users(); ++u) {
    UserProfileRow& row = stats.per_user[u];
    row.size = store.events[u].size();
    double pop_sum = 0;
    for (const auto& [poi, cnt] : store.counts[u]) {
      if (scheme.item_group[static_cast<std::size_t>(poi)] == ItemGroup::short_head)
        ++row.popular_count;
      pop_sum += static_cast<double>(totals[static_cast<std::size_t>(poi)]);
    }
    const std::size_t distinct = store.counts[u].size();
    row.mean_popularity = distinct > 0 ? pop_sum / static_cast<double>(distinct) : 0.0;
    if (distinct > 0) {
      const double unpopular_share =
          static_cast<double>(distinct - row.popular_count) / static_cast<double>(distinct);
      if (unpopular_share >= 0.2 - 1e-12) ++stats.users_with_20pct_unpopular;
    }
    sizes.push_back(static_cast<double>(row.size));
    populars.push_back(static_cast<double>(row.popular_count));
    means.push_back(row.mean_popularity);
  }
  stats.r_size_popular = pearson(sizes, populars);
  stats.r_size_mean_pop = pearson(sizes, means);
  return stats;
}

std::vector<std::pair<std::size_t, std::size_t>> longtail_curve(const InteractionStore& store) {
  if (store.n_pois() == 0) throw DataError("longtail_curve on an empty catalog");
  const auto totals = poi_totals(store);
  const auto order = popularity_order(totals);
  std::vector<std::pair<std::size_t, std::size_t>> curve;
  curve.reserve(order.size());
  for (std::size_t r = 0; r < order.size(); ++r)
    curve.emplace_back(r + 1, totals[static_cast<std::size_t>(order[r])]);
  return curve;
}

void write_analysis_outputs(const InteractionStore& store, const GroupScheme& scheme,
                            const ProfileStats& stats, const std::filesystem::path& dir) {
  std::string longtail = "rank,checkins\n";
  for (const auto& [rank, count] : longtail_curve(store))
    longtail += std::to_string(rank) + "," + std::to_string(count) + "\n";
  util::atomic_write_file(dir / "longtail.csv", longtail);

  std::string profile = "user_id,profile_size,popular_pois,mean_item_popularity\n";
  char buf[64];
  for (std::size_t u = 0; u < store.n_users(); ++u) {
    const auto& row = stats.per_user[u];
    std::snprintf(buf, sizeof(buf), "%.17g", row.mean_popularity);
    profile += store.user_ids[u] + "," + std::to_string(row.size) + "," +
               std::to_string(row.popular_count) + "," + buf + "\n";
  }
  util::atomic_write_file(dir / "profile_stats.csv", profile);

  std::string groups = "kind,id,group\n";
  for (std::size_t u = 0; u < store.n_users(); ++u)
    groups += std::string("user,") + store.user_ids[u] + "," + label(scheme.user_group[u]) + "\n";
  for (std::size_t p = 0; p < store.n_pois(); ++p)
    groups += std::string("poi,") + store.poi_ids[p] + "," + label(scheme.item_group[p]) + "\n";
  util::atomic_write_file(dir / "groups.csv", groups);

  nlohmann::ordered_json summary;
  summary["pearson"]["size_vs_popular_count"] =
      stats.r_size_popular ? nlohmann::json(*stats.r_size_popular) : nlohmann::json();
  summary["pearson"]["size_vs_mean_popularity"] =
      stats.r_size_mean_pop ? nlohmann::json(*stats.r_size_mean_pop) : nlohmann::json();
  summary["users_with_20pct_unpopular"] = stats.users_with_20pct_unpopular;
  const auto ug = scheme.user_group_sizes();
  const auto ig = scheme.item_group_sizes();
  for (std::size_t g = 0; g < kUserGroups; ++g)
    summary["user_groups"][label(static_cast<UserGroup>(g))] = ug[g];
  for (std::size_t g = 0; g < kItemGroups; ++g)
    summary["item_groups"][label(static_cast<ItemGroup>(g))] = ig[g];
  util::atomic_write_file(dir / "analysis.json", summary.dump(2) + "\n");
}

}  // namespace poibench::profiling
