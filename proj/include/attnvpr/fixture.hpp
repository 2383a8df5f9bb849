#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "attnvpr/tensor_io.hpp"

namespace attnvpr {

/// Synthetic desk-scale dataset: a geo-gridded database, a rank-planted query
/// set and a "flood" query set whose noise region misleads native GeM pooling.
///
///   <root>/model.toml
///   <root>/db/manifest.csv         <root>/db/features/<id>.fmap
///   <root>/queries/manifest.csv    <root>/queries/features/<id>.fmap
///                                  <root>/queries/attention/<id>.attn.json
///   <root>/flood/manifest.csv      (same layout as queries)
struct FixtureLayout {
  std::filesystem::path root;

  std::filesystem::path profile() const { return root / "model.toml"; }
  std::filesystem::path set_dir(const std::string& set) const { return root / set; }
  std::filesystem::path manifest(const std::string& set) const { return root / set / "manifest.csv"; }
  std::filesystem::path features(const std::string& set) const { return root / set / "features"; }
  std::filesystem::path attention(const std::string& set) const { return root / set / "attention"; }
};

inline constexpr std::uint32_t kFixtureGrid = 7;
inline constexpr std::uint32_t kFixtureGenericChannels = 4;
inline constexpr double kFixtureSpacingM = 150.0;
inline constexpr double kFixtureOrigin[2] = {37.7749, -122.4194};

/// Rank at which the correct place is planted for query q (pattern index q % 10).
/// Over ten queries this yields Recall@1/5/10 = 60/80/90 at a 25 m threshold.
inline constexpr std::array<std::size_t, 10> kPlantedRanks{1, 1, 1, 1, 1, 1, 3, 5, 8, 12};

/// Smallest database that can host every planted rank.
inline constexpr std::size_t kMinFixtureDb = 12;

struct FixtureOptions {
  std::uint64_t seed = 7;
  std::size_t n_db = 40;
  std::size_t n_queries = 10;
};

/// Geotag of database place i on the fixture grid.
GeoTag fixture_place(std::size_t i, std::size_t n_db);

/// Place index the q-th query of either set depicts.
std::size_t fixture_target(std::size_t q, std::size_t n_db);
/// Place whose signature fills the flood query's noise region.
std::size_t fixture_decoy(std::size_t q, std::size_t n_db);

/// Writes the dataset; identical options produce byte-identical trees.
FixtureLayout gen_fixture(const FixtureOptions& options, const std::filesystem::path& out);

}  // namespace attnvpr
