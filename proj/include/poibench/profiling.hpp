#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "poibench/types.hpp"

namespace poibench::profiling {

enum class UserGroup : std::uint8_t {
  very_inactive = 0,
  slightly_inactive = 1,
  slightly_active = 2,
  very_active = 3,
};
inline constexpr std::size_t kUserGroups = 4;

enum class ItemGroup : std::uint8_t {
  short_head = 0,
  mid_tail = 1,
  long_tail = 2,
};
inline constexpr std::size_t kItemGroups = 3;

const char* label(UserGroup g);
const char* label(ItemGroup g);

struct GroupScheme {
  std::vector<UserGroup> user_group;  // per user index
  std::vector<ItemGroup> item_group;  // per poi index
  std::array<std::uint32_t, 3> user_thresholds{};
  std::array<double, 3> item_shares{0.5, 0.3, 0.2};

  std::array<std::size_t, kUserGroups> user_group_sizes() const;
  std::array<std::size_t, kItemGroups> item_group_sizes() const;
};

struct UserProfileRow {
  std::size_t size = 0;           // check-ins in the user's full profile
  std::size_t popular_count = 0;  // distinct short-head POIs in the profile
  double mean_popularity = 0.0;   // mean total check-in count over distinct profile POIs
};

struct ProfileStats {
  std::vector<UserProfileRow> per_user;
  std::optional<double> r_size_popular;
  std::optional<double> r_size_mean_pop;
  std::size_t users_with_20pct_unpopular = 0;
};

/// Pearson correlation; nullopt when undefined (n < 2 or zero variance).
std::optional<double> pearson(const std::vector<double>& xs, const std::vector<double>& ys);

/// Greedy popularity tiers over descending total check-in counts (ties by
/// identifier): short-head is the smallest prefix holding at least
/// shares[0] of the check-in mass, mid-tail extends the prefix to
/// shares[0]+shares[1], the rest is long-tail.
std::vector<ItemGroup> segment_items(const InteractionStore& store,
                                     const std::array<double, 3>& shares = {0.5, 0.3, 0.2});

/// Activity tiers by full-profile check-in count n: n < t1, t1 <= n < t2,
/// t2 <= n < t3, n >= t3.
std::vector<UserGroup> segment_users(const InteractionStore& store,
                                     const std::array<std::uint32_t, 3>& thresholds);

GroupScheme build_scheme(const InteractionStore& store,
                         const std::array<std::uint32_t, 3>& user_thresholds,
                         const std::array<double, 3>& item_shares = {0.5, 0.3, 0.2});

ProfileStats profile_popularity(const InteractionStore& store, const GroupScheme& scheme);

/// Descending (rank, total check-in count) pairs, rank starting at 1.
std::vector<std::pair<std::size_t, std::size_t>> longtail_curve(const InteractionStore& store);

/// The `analyze` outputs: longtail.csv, profile_stats.csv, groups.csv and
/// analysis.json (Pearson coefficients + group cardinalities).
void write_analysis_outputs(const InteractionStore& store, const GroupScheme& scheme,
                            const ProfileStats& stats, const std::filesystem::path& dir);

}  // namespace poibench::profiling
