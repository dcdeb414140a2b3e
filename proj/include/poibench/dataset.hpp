#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "poibench/types.hpp"

namespace poibench::dataset {

/// Parse check-in, social, and category files. Delimiter (tab or comma) is
/// auto-detected per file. Malformed lines are collected per file; more than
/// 1% malformed in any file is fatal.
RawDataset ingest(const std::filesystem::path& checkin_file,
                  const std::optional<std::filesystem::path>& social_file = std::nullopt,
                  const std::optional<std::filesystem::path>& category_file = std::nullopt);

/// Build the densified store: drop POIs with fewer than min_poi_visits
/// check-ins, then drop users whose remaining check-in count is below
/// min_user_checkins (one pass each, in that order).
InteractionStore preprocess(const RawDataset& raw, int min_user_checkins, int min_poi_visits);

/// Per-user temporal split: earliest ceil(train_frac*n) events to train, most
/// recent floor((1-train_frac-valid_frac)*n) to test, remainder validation.
/// A POI seen in several windows belongs to the window of its earliest
/// check-in. Users with fewer than 3 distinct POIs are flagged and kept
/// train-only.
InteractionStore temporal_split(InteractionStore store, double train_frac = 0.7,
                                double valid_frac = 0.1);

/// Keep a seed-deterministic uniform subset of floor(fraction * n_users)
/// users. The POI catalog is left untouched.
InteractionStore sample_users(const InteractionStore& store, double fraction, std::uint64_t seed);

DatasetStats stats(const InteractionStore& store);

/// Versioned binary round-trip for the store (exact, including split state).
void save_store(const InteractionStore& store, const std::filesystem::path& path);
InteractionStore load_store(const std::filesystem::path& path);

/// Emit user_index.csv / poi_index.csv (identifier -> dense index) next to
/// any exported artifact.
void export_index_maps(const InteractionStore& store, const std::filesystem::path& dir);

}  // namespace poibench::dataset
