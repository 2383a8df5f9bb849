#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace attnvpr {

namespace fs = std::filesystem;

/// WGS84 position in degrees.
struct GeoTag {
  double lat = 0.0;
  double lon = 0.0;
};

/// Dense C x H x W activation grid, row-major (c, then h, then w).
struct FeatureMap {
  std::string image_id;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> data;

  std::size_t units() const noexcept { return std::size_t{height} * width; }
  float at(std::size_t c, std::size_t h, std::size_t w) const {
    return data[(c * height + h) * width + w];
  }
  std::span<const float> channel(std::size_t c) const {
    return {data.data() + c * units(), units()};
  }
  void validate() const;
};

/// Soft assignment of n spatial units to K clusters. Stored K x n, row-major.
struct AssignmentMatrix {
  std::string image_id;
  std::uint32_t clusters = 0;
  std::uint32_t units = 0;
  std::vector<float> probs;

  float at(std::size_t k, std::size_t j) const { return probs[k * units + j]; }
  void validate() const;
};

/// Local feature columns F, stored D x n row-major so column j is strided.
struct LocalFeatures {
  std::string image_id;
  std::uint32_t dim = 0;
  std::uint32_t units = 0;
  std::vector<float> values;

  float at(std::size_t d, std::size_t j) const { return values[d * units + j]; }
  void validate() const;
};

struct ManifestEntry {
  std::string id;
  std::string path;
  GeoTag geo;
};

/// Ordered id -> (path, geotag) table with O(1) lookup by id.
class Manifest {
 public:
  Manifest() = default;
  explicit Manifest(std::vector<ManifestEntry> entries);

  void add(ManifestEntry entry);
  const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
  const ManifestEntry* find(const std::string& id) const;
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

 private:
  std::vector<ManifestEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// L2-normalized global descriptors with parallel ids and geotags.
struct DescriptorDb {
  std::uint32_t dim = 0;
  std::vector<float> rows;
  std::vector<std::string> ids;
  std::vector<GeoTag> geotags;

  std::size_t size() const noexcept { return ids.size(); }
  std::span<const float> row(std::size_t i) const { return {rows.data() + i * dim, dim}; }
  void append(const std::string& id, GeoTag geo, std::span<const float> values);
  void validate() const;
};

FeatureMap read_feature_map(const fs::path& path);
void write_feature_map(const FeatureMap& fm, const fs::path& path);

AssignmentMatrix read_assignment(const fs::path& path);
void write_assignment(const AssignmentMatrix& am, const fs::path& path);

LocalFeatures read_local_features(const fs::path& path);
void write_local_features(const LocalFeatures& lf, const fs::path& path);

Manifest load_manifest(const fs::path& path);
Manifest parse_manifest(const std::string& text);
void save_manifest(const Manifest& manifest, const fs::path& path);

/// Sidecar path holding ids and geotags for a descriptor db: `db.vdb` -> `db.meta.csv`.
fs::path db_meta_path(const fs::path& db_path);
DescriptorDb read_db(const fs::path& path);
void write_db(const DescriptorDb& db, const fs::path& path);

}  // namespace attnvpr
