#include "poibench/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "poibench/dataset.hpp"
#include "poibench/errors.hpp"
#include "poibench/util/io.hpp"
#include "poibench/util/rng.hpp"

namespace poibench::synth {

namespace {

std::string padded(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04zu", prefix, i);
  return buf;
}

/// Cumulative Zipf weights over ranks 0..n-1; sample by binary search.
std::vector<double> zipf_cumulative(std::size_t n, double exponent) {
  std::vector<double> cum(n);
  double run = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    run += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
    cum[r] = run;
  }
  return cum;
}

std::size_t sample_rank(const std::vector<double>& cum, util::Rng& rng) {
  const double draw = rng.next_double() * cum.back();
  auto it = std::upper_bound(cum.begin(), cum.end(), draw);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
}

}  // namespace

CorpusFiles write_corpus(const CorpusParams& params, const std::filesystem::path& dir) {
  if (params.n_users == 0 || params.n_pois == 0 || params.n_clusters == 0)
    throw ConfigError("synthetic corpus: users, pois, and clusters must be positive");
  if (params.min_events_per_user == 0 || params.max_events_per_user < params.min_events_per_user)
    throw ConfigError("synthetic corpus: bad events-per-user range");
  if (params.zipf_exponent < 0.0) throw ConfigError("synthetic corpus: zipf exponent must be >= 0");

  util::Rng rng(params.seed);
  const std::size_t n_clusters = params.n_clusters;

  // POIs: cluster assignment, coordinates around the cluster center, and a
  // global Zipf popularity rank equal to the POI index.
  std::vector<std::size_t> poi_cluster(params.n_pois);
  std::vector<double> poi_lat(params.n_pois), poi_lon(params.n_pois);
  std::vector<std::vector<std::size_t>> cluster_pois(n_clusters);
  for (std::size_t p = 0; p < params.n_pois; ++p) {
    const std::size_t c = rng.next_below(n_clusters);
    poi_cluster[p] = c;
    poi_lat[p] = 38.0 + 1.5 * static_cast<double>(c) + rng.uniform(-0.04, 0.04);
    poi_lon[p] = 5.0 + 2.0 * static_cast<double>(c) + rng.uniform(-0.04, 0.04);
    cluster_pois[c].push_back(p);
  }

  const std::vector<double> global_cum = zipf_cumulative(params.n_pois, params.zipf_exponent);
  std::vector<std::vector<double>> cluster_cum(n_clusters);
  for (std::size_t c = 0; c < n_clusters; ++c) {
    auto& cum = cluster_cum[c];
    cum.resize(cluster_pois[c].size());
    double run = 0.0;
    for (std::size_t r = 0; r < cluster_pois[c].size(); ++r) {
      // inherit the global rank so cluster and global popularity agree
      run += 1.0 / std::pow(static_cast<double>(cluster_pois[c][r] + 1), params.zipf_exponent);
      cum[r] = run;
    }
  }

  // Categories: one to three per POI.
  std::string categories_text;
  if (params.n_categories > 0) {
    for (std::size_t p = 0; p < params.n_pois; ++p) {
      const std::size_t k = 1 + rng.next_below(3);
      std::vector<std::size_t> gs;
      for (std::size_t i = 0; i < k; ++i) gs.push_back(rng.next_below(params.n_categories));
      std::sort(gs.begin(), gs.end());
      gs.erase(std::unique(gs.begin(), gs.end()), gs.end());
      for (std::size_t g : gs)
        categories_text += padded("p", p) + "\t" + padded("cat", g) + "\n";
    }
  }

  // Users: home cluster, event count, mostly-home check-in trail.
  std::string checkins_text;
  std::vector<std::size_t> home(params.n_users);
  for (std::size_t u = 0; u < params.n_users; ++u) {
    home[u] = rng.next_below(n_clusters);
    const std::size_t span = params.max_events_per_user - params.min_events_per_user + 1;
    const std::size_t n_events = params.min_events_per_user + rng.next_below(span);
    std::int64_t when = 1600000000;
    for (std::size_t t = 0; t < n_events; ++t) {
      std::size_t p;
      if (cluster_pois[home[u]].empty() || rng.next_double() < params.roam_probability) {
        p = sample_rank(global_cum, rng);
      } else {
        const std::size_t r = sample_rank(cluster_cum[home[u]], rng);
        p = cluster_pois[home[u]][r];
      }
      when += 3600 + static_cast<std::int64_t>(rng.next_below(7200));
      char line[160];
      std::snprintf(line, sizeof line, "%s\t%s\t%.6f\t%.6f\t%lld\n", padded("u", u).c_str(),
                    padded("p", p).c_str(), poi_lat[p], poi_lon[p],
                    static_cast<long long>(when));
      checkins_text += line;
    }
  }

  // Friendships: denser within a home cluster.
  std::string social_text;
  for (std::size_t a = 0; a < params.n_users; ++a) {
    for (std::size_t b = a + 1; b < params.n_users; ++b) {
      const double prob = home[a] == home[b] ? params.within_cluster_friend_prob
                                             : params.cross_cluster_friend_prob;
      if (rng.next_double() < prob)
        social_text += padded("u", a) + "\t" + padded("u", b) + "\n";
    }
  }

  std::filesystem::create_directories(dir);
  CorpusFiles files;
  files.checkins = dir / "checkins.tsv";
  files.social = dir / "social.tsv";
  files.categories = dir / "categories.tsv";
  util::atomic_write_file(files.checkins, checkins_text);
  util::atomic_write_file(files.social, social_text);
  util::atomic_write_file(files.categories, categories_text);
  return files;
}

InteractionStore two_block_store(const BlockParams& params) {
  if (params.users_per_block == 0 || params.pois_per_block == 0 || params.events_per_user == 0)
    throw ConfigError("two-block store: all sizes must be positive");

  util::Rng rng(params.seed);
  const std::size_t n = 2 * params.users_per_block;
  const std::size_t m = 2 * params.pois_per_block;

  InteractionStore s;
  for (std::size_t u = 0; u < n; ++u) s.user_ids.push_back(padded("u", u));
  for (std::size_t p = 0; p < m; ++p) s.poi_ids.push_back(padded("p", p));
  s.events.resize(n);
  s.counts.resize(n);
  s.friends.resize(n);
  s.poi_meta.resize(m);
  for (std::size_t p = 0; p < m; ++p) {
    const bool second = p >= params.pois_per_block;
    s.poi_meta[p].lat = second ? 50.0 : 40.0;
    s.poi_meta[p].lon = second ? 15.0 : 5.0;
  }

  const std::vector<double> cum = zipf_cumulative(params.pois_per_block, params.zipf_exponent);
  for (std::size_t u = 0; u < n; ++u) {
    const std::size_t offset = u < params.users_per_block ? 0 : params.pois_per_block;
    std::int64_t when = 0;
    for (std::size_t t = 0; t < params.events_per_user; ++t) {
      const auto p = static_cast<PoiIdx>(offset + sample_rank(cum, rng));
      when += 3600;
      s.events[u].push_back({p, when});
    }
    std::vector<PoiIdx> pois;
    for (const auto& e : s.events[u]) pois.push_back(e.poi);
    std::sort(pois.begin(), pois.end());
    for (std::size_t i = 0; i < pois.size();) {
      std::size_t j = i;
      while (j < pois.size() && pois[j] == pois[i]) ++j;
      s.counts[u].push_back({pois[i], static_cast<std::uint32_t>(j - i)});
      i = j;
    }
  }
  return dataset::temporal_split(std::move(s));
}

}  // namespace poibench::synth
