#include "attnvpr/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "attnvpr/error.hpp"
#include "attnvpr/file_util.hpp"
#include "attnvpr/geo_eval.hpp"
#include "attnvpr/pipeline.hpp"

namespace attnvpr {

namespace {

constexpr double kMetersPerDegree = kEarthRadiusM * std::numbers::pi / 180.0;

// Uniform in [0, 1) straight from the engine bits; std distributions are
// implementation-defined and would break byte-determinism across toolchains.
class Jitter {
 public:
  explicit Jitter(std::uint64_t seed) : engine_(seed) {}
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  float around(double base, double spread) { return static_cast<float>(base + spread * unit()); }

 private:
  std::mt19937_64 engine_;
};

std::size_t channels_for(std::size_t n_db) { return n_db + kFixtureGenericChannels; }

FeatureMap blank_map(const std::string& id, std::size_t channels) {
  FeatureMap fm;
  fm.image_id = id;
  fm.channels = static_cast<std::uint32_t>(channels);
  fm.height = kFixtureGrid;
  fm.width = kFixtureGrid;
  fm.data.assign(channels * kFixtureGrid * kFixtureGrid, 0.0f);
  return fm;
}

float& cell(FeatureMap& fm, std::size_t c, std::size_t h, std::size_t w) {
  return fm.data[(c * fm.height + h) * fm.width + w];
}

std::string id_of(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04zu", prefix, i);
  return buf;
}

GeoTag near(const GeoTag& place, Jitter& rng) {
  // 3-10 m from the place centre, well inside the 25 m threshold.
  const double dist = 3.0 + 7.0 * rng.unit();
  const double bearing = 2.0 * std::numbers::pi * rng.unit();
  const double dlat = dist * std::cos(bearing) / kMetersPerDegree;
  const double dlon = dist * std::sin(bearing) / (kMetersPerDegree * std::cos(place.lat * std::numbers::pi / 180.0));
  return {place.lat + dlat, place.lon + dlon};
}

nlohmann::ordered_json point(double x, double y, double w, const char* why) {
  nlohmann::ordered_json p;
  p["center"] = {x, y};
  p["weight"] = w;
  p["reasoning"] = why;
  return p;
}

std::string planted_attention(std::size_t q) {
  if (q % 2 == 0) return "None";
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  arr.push_back(point(0.3, 0.35, 1.7, "distinctive facade with ornamental cornice"));
  arr.push_back(point(0.75, 0.3, 1.3, "clear storefront signage"));
  arr.push_back(point(0.5, 0.9, 0.1, "generic pavement"));
  return arr.dump(4) + "\n";
}

std::string flood_attention() {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  arr.push_back(point(0.25, 0.25, 1.8, "rare architectural detail on the left building"));
  arr.push_back(point(0.75, 0.25, 1.6, "unique tower silhouette"));
  arr.push_back(point(0.15, 0.85, 0.1, "floodwater surface"));
  arr.push_back(point(0.5, 0.85, 0.1, "floodwater surface"));
  arr.push_back(point(0.85, 0.85, 0.1, "floodwater reflections"));
  return arr.dump(4) + "\n";
}

}  // namespace

GeoTag fixture_place(std::size_t i, std::size_t n_db) {
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(std::max<std::size_t>(n_db, 1)))));
  const double row = static_cast<double>(i / cols);
  const double col = static_cast<double>(i % cols);
  const double lat = kFixtureOrigin[0] + row * kFixtureSpacingM / kMetersPerDegree;
  const double lon = kFixtureOrigin[1] + col * kFixtureSpacingM /
                                             (kMetersPerDegree * std::cos(kFixtureOrigin[0] * std::numbers::pi / 180.0));
  return {lat, lon};
}

std::size_t fixture_target(std::size_t q, std::size_t n_db) { return q % n_db; }

std::size_t fixture_decoy(std::size_t q, std::size_t n_db) {
  return (fixture_target(q, n_db) + std::max<std::size_t>(n_db / 2, 1)) % n_db;
}

FixtureLayout gen_fixture(const FixtureOptions& options, const std::filesystem::path& out) {
  if (options.n_db < 1 || options.n_queries < 1) {
    throw Error(ErrorCode::InvalidArgument, "fixture needs at least one database image and one query");
  }
  const FixtureLayout layout{out};
  const std::size_t n_db = options.n_db;
  const std::size_t channels = channels_for(n_db);
  const std::size_t generic0 = n_db;
  Jitter rng(options.seed);

  ModelProfile profile;
  profile.aggregator = AggregatorKind::Gem;
  profile.gem.p = 3.0;
  profile.descriptor_dim = static_cast<std::uint32_t>(channels);
  profile.tap_point = "synthetic fixture";
  atomic_write(layout.profile(), format_profile(profile));

  // Database: place signature channel ~1, shared generic channels ~0.3.
  Manifest db_manifest;
  for (std::size_t i = 0; i < n_db; ++i) {
    const std::string id = id_of("db", i);
    FeatureMap fm = blank_map(id, channels);
    for (std::size_t h = 0; h < kFixtureGrid; ++h) {
      for (std::size_t w = 0; w < kFixtureGrid; ++w) {
        for (std::size_t c = 0; c < channels; ++c) {
          const double base = c == i ? 1.0 : (c >= generic0 ? 0.3 : 0.0);
          cell(fm, c, h, w) = rng.around(base, 0.02);
        }
      }
    }
    write_feature_map(fm, layout.features("db") / (id + ".fmap"));
    db_manifest.add({id, "features/" + id + ".fmap", fixture_place(i, n_db)});
  }
  save_manifest(db_manifest, layout.manifest("db"));

  // Rank-planted queries: spatially constant maps, so attention cannot move them.
  Manifest q_manifest;
  for (std::size_t q = 0; q < options.n_queries; ++q) {
    const std::string id = id_of("q", q);
    const std::size_t target = fixture_target(q, n_db);
    const std::size_t rank = std::min(kPlantedRanks[q % kPlantedRanks.size()], n_db);
    std::vector<float> column(channels, 0.0f);
    column[target] = 1.0f;
    for (std::size_t m = 0; m + 1 < rank; ++m) {
      column[(target + 1 + m) % n_db] = static_cast<float>(1.25 + 0.05 * static_cast<double>(rank - 2 - m));
    }
    for (std::size_t c = generic0; c < channels; ++c) column[c] = 0.3f;
    for (auto& v : column) v += static_cast<float>(0.005 * rng.unit());
    FeatureMap fm = blank_map(id, channels);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t u = 0; u < fm.units(); ++u) fm.data[c * fm.units() + u] = column[c];
    }
    write_feature_map(fm, layout.features("queries") / (id + ".fmap"));
    atomic_write(layout.attention("queries") / (id + ".attn.json"), planted_attention(q));
    q_manifest.add({id, "features/" + id + ".fmap", near(fixture_place(target, n_db), rng)});
  }
  save_manifest(q_manifest, layout.manifest("queries"));

  // Flood queries: the landmark fills the top rows, a strong decoy signature
  // (the "floodwater") fills the bottom rows and wins under native pooling.
  Manifest f_manifest;
  const std::size_t water_from = 4;
  for (std::size_t q = 0; q < options.n_queries; ++q) {
    const std::string id = id_of("f", q);
    const std::size_t target = fixture_target(q, n_db);
    const std::size_t decoy = fixture_decoy(q, n_db);
    FeatureMap fm = blank_map(id, channels);
    for (std::size_t h = 0; h < kFixtureGrid; ++h) {
      for (std::size_t w = 0; w < kFixtureGrid; ++w) {
        for (std::size_t c = 0; c < channels; ++c) {
          double base = c >= generic0 ? 0.3 : 0.0;
          if (h < water_from && c == target) base = 1.0;
          if (h >= water_from && c == decoy) base = 1.4;
          cell(fm, c, h, w) = rng.around(base, 0.02);
        }
      }
    }
    write_feature_map(fm, layout.features("flood") / (id + ".fmap"));
    atomic_write(layout.attention("flood") / (id + ".attn.json"), flood_attention());
    f_manifest.add({id, "features/" + id + ".fmap", near(fixture_place(target, n_db), rng)});
  }
  save_manifest(f_manifest, layout.manifest("flood"));
  return layout;
}

}  // namespace attnvpr
