#pragma once

#include <cstdint>
#include <filesystem>

#include "poibench/types.hpp"

namespace poibench::synth {

/// Clustered LBSN corpus: POIs fall into geographic clusters with Zipf
/// popularity, users check in mostly inside a home cluster, and friendships
/// are denser within clusters than across them.
struct CorpusParams {
  std::size_t n_users = 200;
  std::size_t n_pois = 500;
  std::size_t n_categories = 20;
  std::size_t n_clusters = 5;
  double zipf_exponent = 1.0;
  double within_cluster_friend_prob = 0.08;
  double cross_cluster_friend_prob = 0.004;
  std::size_t min_events_per_user = 20;
  std::size_t max_events_per_user = 60;
  double roam_probability = 0.15;  // chance a check-in leaves the home cluster
  std::uint64_t seed = 7;
};

struct CorpusFiles {
  std::filesystem::path checkins;
  std::filesystem::path social;
  std::filesystem::path categories;
};

/// Write checkins.tsv, social.tsv, and categories.tsv under dir in the raw
/// ingest format. Deterministic for a given parameter set.
CorpusFiles write_corpus(const CorpusParams& params, const std::filesystem::path& dir);

/// Two user communities over disjoint POI blocks with symmetric popularity:
/// global popularity carries no community signal, factor models can learn it.
struct BlockParams {
  std::size_t users_per_block = 30;
  std::size_t pois_per_block = 25;
  std::size_t events_per_user = 16;
  double zipf_exponent = 0.6;  // within-block popularity skew
  std::uint64_t seed = 11;
};

/// Returns a store already passed through the temporal split.
InteractionStore two_block_store(const BlockParams& params);

}  // namespace poibench::synth
