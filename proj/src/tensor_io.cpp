#include "attnvpr/tensor_io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "attnvpr/error.hpp"
#include "attnvpr/file_util.hpp"

namespace attnvpr {

namespace {

constexpr std::string_view kFmapMagic{"FMAP1", 5};
constexpr std::string_view kAmatMagic{"AMAT1", 5};
constexpr std::string_view kLfeatMagic{"LFT1\0", 5};
constexpr std::string_view kVdbMagic{"VDB1\0", 5};

void require_finite(std::span<const float> values, const std::string& what) {
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, what + " contains NaN or Inf");
  }
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

void FeatureMap::validate() const {
  if (channels == 0 || height == 0 || width == 0) {
    throw Error(ErrorCode::ShapeMismatch, "feature map '" + image_id + "' has a zero dimension");
  }
  if (data.size() != std::size_t{channels} * height * width) {
    throw Error(ErrorCode::ShapeMismatch, "feature map '" + image_id + "' data length != C*H*W");
  }
  require_finite(data, "feature map '" + image_id + "'");
}

void AssignmentMatrix::validate() const {
  if (clusters == 0 || units == 0 || probs.size() != std::size_t{clusters} * units) {
    throw Error(ErrorCode::ShapeMismatch, "assignment matrix '" + image_id + "' shape inconsistent");
  }
  require_finite(probs, "assignment matrix '" + image_id + "'");
  for (std::size_t j = 0; j < units; ++j) {
    double sum = 0.0;
    for (std::size_t k = 0; k < clusters; ++k) {
      const float p = at(k, j);
      if (p < 0.0f || p > 1.0f) {
        throw Error(ErrorCode::NormViolation, "assignment probability outside [0,1]");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-4) {
      throw Error(ErrorCode::NormViolation,
                  "assignment column " + std::to_string(j) + " sums to " + format_double(sum));
    }
  }
}

void LocalFeatures::validate() const {
  if (dim == 0 || units == 0 || values.size() != std::size_t{dim} * units) {
    throw Error(ErrorCode::ShapeMismatch, "local features '" + image_id + "' shape inconsistent");
  }
  require_finite(values, "local features '" + image_id + "'");
}

FeatureMap read_feature_map(const fs::path& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, path.string());
  r.expect_magic(kFmapMagic);
  FeatureMap fm;
  fm.image_id = path.stem().string();
  fm.channels = r.u32();
  fm.height = r.u32();
  fm.width = r.u32();
  fm.data = r.f32_payload(std::size_t{fm.channels} * fm.height * fm.width);
  fm.validate();
  return fm;
}

void write_feature_map(const FeatureMap& fm, const fs::path& path) {
  fm.validate();
  ByteWriter w;
  w.magic(kFmapMagic);
  w.u32(fm.channels);
  w.u32(fm.height);
  w.u32(fm.width);
  w.f32(fm.data);
  atomic_write(path, w.bytes());
}

AssignmentMatrix read_assignment(const fs::path& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, path.string());
  r.expect_magic(kAmatMagic);
  AssignmentMatrix am;
  am.image_id = path.stem().string();
  am.clusters = r.u32();
  am.units = r.u32();
  am.probs = r.f32_payload(std::size_t{am.clusters} * am.units);
  am.validate();
  return am;
}

void write_assignment(const AssignmentMatrix& am, const fs::path& path) {
  am.validate();
  ByteWriter w;
  w.magic(kAmatMagic);
  w.u32(am.clusters);
  w.u32(am.units);
  w.f32(am.probs);
  atomic_write(path, w.bytes());
}

LocalFeatures read_local_features(const fs::path& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, path.string());
  r.expect_magic(kLfeatMagic);
  LocalFeatures lf;
  lf.image_id = path.stem().string();
  lf.dim = r.u32();
  lf.units = r.u32();
  lf.values = r.f32_payload(std::size_t{lf.dim} * lf.units);
  lf.validate();
  return lf;
}

void write_local_features(const LocalFeatures& lf, const fs::path& path) {
  lf.validate();
  ByteWriter w;
  w.magic(kLfeatMagic);
  w.u32(lf.dim);
  w.u32(lf.units);
  w.f32(lf.values);
  atomic_write(path, w.bytes());
}

Manifest::Manifest(std::vector<ManifestEntry> entries) {
  entries_.reserve(entries.size());
  for (auto& e : entries) add(std::move(e));
}

void Manifest::add(ManifestEntry entry) {
  if (!(entry.geo.lat >= -90.0 && entry.geo.lat <= 90.0) ||
      !(entry.geo.lon >= -180.0 && entry.geo.lon <= 180.0)) {
    throw Error(ErrorCode::CoordinateOutOfRange, "entry '" + entry.id + "' has lat/lon outside WGS84 bounds");
  }
  auto [it, inserted] = index_.emplace(entry.id, entries_.size());
  if (!inserted) throw Error(ErrorCode::DuplicateId, "id '" + entry.id + "' appears twice");
  entries_.push_back(std::move(entry));
}

const ManifestEntry* Manifest::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "id,path,lat,lon") {
        throw Error(ErrorCode::MalformedRow, "manifest header must be 'id,path,lat,lon'");
      }
      header_seen = true;
      continue;
    }
    auto fields = split(line, ',');
    ManifestEntry e;
    if (fields.size() != 4 || fields[0].empty() || !parse_double(fields[2], e.geo.lat) ||
        !parse_double(fields[3], e.geo.lon)) {
      throw Error(ErrorCode::MalformedRow, "manifest line " + std::to_string(line_no) + ": '" + line + "'");
    }
    e.id = std::string(fields[0]);
    e.path = std::string(fields[1]);
    m.add(std::move(e));
  }
  if (!header_seen) throw Error(ErrorCode::MalformedRow, "manifest is empty (missing header)");
  return m;
}

Manifest load_manifest(const fs::path& path) { return parse_manifest(read_file(path)); }

void save_manifest(const Manifest& manifest, const fs::path& path) {
  std::string out = "id,path,lat,lon\n";
  for (const auto& e : manifest.entries()) {
    out += e.id + ',' + e.path + ',' + format_double(e.geo.lat) + ',' + format_double(e.geo.lon) + '\n';
  }
  atomic_write(path, out);
}

void DescriptorDb::append(const std::string& id, GeoTag geo, std::span<const float> values) {
  if (values.size() != dim) {
    throw Error(ErrorCode::DimMismatch, "descriptor for '" + id + "' has dim " + std::to_string(values.size()) +
                                            ", db expects " + std::to_string(dim));
  }
  ids.push_back(id);
  geotags.push_back(geo);
  rows.insert(rows.end(), values.begin(), values.end());
}

void DescriptorDb::validate() const {
  if (ids.size() != geotags.size() || rows.size() != ids.size() * std::size_t{dim}) {
    throw Error(ErrorCode::DimMismatch, "descriptor db rows/ids/geotags disagree");
  }
  require_finite(rows, "descriptor db");
  for (std::size_t i = 0; i < size(); ++i) {
    double sq = 0.0;
    for (float v : row(i)) sq += double{v} * v;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-5) {
      throw Error(ErrorCode::NormViolation,
                  "row '" + ids[i] + "' has norm " + format_double(std::sqrt(sq)) + ", expected 1");
    }
  }
}

fs::path db_meta_path(const fs::path& db_path) {
  auto p = db_path;
  p.replace_extension(".meta.csv");
  return p;
}

DescriptorDb read_db(const fs::path& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, path.string());
  r.expect_magic(kVdbMagic);
  DescriptorDb db;
  const std::uint32_t n = r.u32();
  db.dim = r.u32();
  try {
    db.rows = r.f32_payload(std::size_t{n} * db.dim);
  } catch (const Error& e) {
    throw Error(ErrorCode::DimMismatch, e.what());
  }
  const Manifest meta = load_manifest(db_meta_path(path));
  if (meta.size() != n) {
    throw Error(ErrorCode::DimMismatch, "db holds " + std::to_string(n) + " rows but sidecar lists " +
                                            std::to_string(meta.size()) + " ids");
  }
  for (const auto& e : meta.entries()) {
    db.ids.push_back(e.id);
    db.geotags.push_back(e.geo);
  }
  db.validate();
  return db;
}

void write_db(const DescriptorDb& db, const fs::path& path) {
  db.validate();
  std::vector<ManifestEntry> meta;
  meta.reserve(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) meta.push_back({db.ids[i], "", db.geotags[i]});
  const Manifest manifest(std::move(meta));

  ByteWriter w;
  w.magic(kVdbMagic);
  w.u32(static_cast<std::uint32_t>(db.size()));
  w.u32(db.dim);
  w.f32(db.rows);
  save_manifest(manifest, db_meta_path(path));
  atomic_write(path, w.bytes());
}

}  // namespace attnvpr
