#include "attnvpr/pipeline.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "attnvpr/error.hpp"
#include "attnvpr/file_util.hpp"
#include "attnvpr/parallel.hpp"

namespace attnvpr {

namespace {

std::string strip(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw Error(ErrorCode::InvalidArgument, "profile key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

std::uint32_t to_count(const std::string& key, const std::string& v) {
  std::uint32_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error(ErrorCode::InvalidArgument, "profile key '" + key + "' expects a count, got '" + v + "'");
  }
  return out;
}

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, end);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

}  // namespace

ModelProfile parse_profile(const std::string& text) {
  ModelProfile p;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = strip(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "profile line without '=': " + line);
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key == "aggregator") {
      if (value == "gem") p.aggregator = AggregatorKind::Gem;
      else if (value == "cluster") p.aggregator = AggregatorKind::Cluster;
      else throw Error(ErrorCode::InvalidArgument, "unknown aggregator '" + value + "'");
    } else if (key == "p") {
      p.gem.p = to_double(key, value);
    } else if (key == "base_weights") {
      if (value == "uniform") p.gem.base_weights = BaseWeights::UniformOnes;
      else if (value == "activation_norm") p.gem.base_weights = BaseWeights::ActivationNorm;
      else throw Error(ErrorCode::InvalidArgument, "unknown base_weights '" + value + "'");
    } else if (key == "descriptor_dim") {
      p.descriptor_dim = to_count(key, value);
    } else if (key == "cluster_mode") {
      if (value == "blended") p.cluster_mode = ClusterMode::Blended;
      else if (value == "literal") p.cluster_mode = ClusterMode::Literal;
      else throw Error(ErrorCode::InvalidArgument, "unknown cluster_mode '" + value + "'");
    } else if (key == "class_token_dim") {
      p.class_token_dim = to_count(key, value);
    } else if (key == "grid_height") {
      p.grid_height = to_count(key, value);
    } else if (key == "grid_width") {
      p.grid_width = to_count(key, value);
    } else if (key == "rbf_sigma") {
      p.rbf.sigma = to_double(key, value);
    } else if (key == "rbf_mode") {
      if (value == "superposition") p.rbf.mode = RbfMode::Superposition;
      else if (value == "exact") p.rbf.mode = RbfMode::ExactInterp;
      else throw Error(ErrorCode::InvalidArgument, "unknown rbf_mode '" + value + "'");
    } else if (key == "tap_point") {
      p.tap_point = value;
    }
    // Unknown keys are exporter metadata and ignored.
  }
  if (!(p.gem.p >= 1.0)) throw Error(ErrorCode::InvalidArgument, "profile p must be >= 1");
  if (!(p.rbf.sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "profile rbf_sigma must be > 0");
  return p;
}

ModelProfile load_profile(const std::filesystem::path& path) { return parse_profile(read_file(path)); }

std::string format_profile(const ModelProfile& p) {
  std::string out;
  out += std::string("aggregator = \"") + (p.aggregator == AggregatorKind::Gem ? "gem" : "cluster") + "\"\n";
  out += "p = " + shortest(p.gem.p) + "\n";
  out += std::string("base_weights = \"") +
         (p.gem.base_weights == BaseWeights::UniformOnes ? "uniform" : "activation_norm") + "\"\n";
  out += "descriptor_dim = " + std::to_string(p.descriptor_dim) + "\n";
  out += std::string("cluster_mode = \"") + (p.cluster_mode == ClusterMode::Blended ? "blended" : "literal") + "\"\n";
  out += "class_token_dim = " + std::to_string(p.class_token_dim) + "\n";
  if (p.grid_height != 0) out += "grid_height = " + std::to_string(p.grid_height) + "\n";
  if (p.grid_width != 0) out += "grid_width = " + std::to_string(p.grid_width) + "\n";
  out += "rbf_sigma = " + shortest(p.rbf.sigma) + "\n";
  out += std::string("rbf_mode = \"") + (p.rbf.mode == RbfMode::Superposition ? "superposition" : "exact") + "\"\n";
  if (!p.tap_point.empty()) out += "tap_point = \"" + p.tap_point + "\"\n";
  return out;
}

ImageFeatures load_image_features(const std::filesystem::path& dir, const std::string& id,
                                  const ModelProfile& profile) {
  ImageFeatures f;
  f.id = id;
  if (profile.aggregator == AggregatorKind::Gem) {
    f.fmap = read_feature_map(dir / (id + ".fmap"));
    f.fmap->image_id = id;
    f.grid_height = f.fmap->height;
    f.grid_width = f.fmap->width;
    return f;
  }

  f.local = read_local_features(dir / (id + ".lfeat"));
  f.assign = read_assignment(dir / (id + ".amat"));
  if (f.local->units != f.assign->units) {
    throw Error(ErrorCode::ShapeMismatch, "'" + id + "': .lfeat and .amat disagree on unit count");
  }
  if (profile.class_token_dim > 0) {
    const LocalFeatures token = read_local_features(dir / (id + ".ctok"));
    if (token.dim != profile.class_token_dim || token.units != 1) {
      throw Error(ErrorCode::DimMismatch, "'" + id + "': class token shape differs from profile");
    }
    f.class_token = token.values;
  }
  const std::uint32_t n = f.local->units;
  if (profile.grid_height != 0 && profile.grid_width != 0) {
    if (std::uint64_t{profile.grid_height} * profile.grid_width != n) {
      throw Error(ErrorCode::ShapeMismatch, "'" + id + "': profile grid does not match unit count");
    }
    f.grid_height = profile.grid_height;
    f.grid_width = profile.grid_width;
  } else {
    const auto side = static_cast<std::uint32_t>(std::lround(std::sqrt(static_cast<double>(n))));
    if (side * side != n) {
      throw Error(ErrorCode::ShapeMismatch, "'" + id + "': unit count is not square; set grid_height/grid_width");
    }
    f.grid_height = f.grid_width = side;
  }
  return f;
}

AttentionMap load_attention(const std::filesystem::path& dir, const std::string& id, std::uint32_t height,
                            std::uint32_t width, const RbfConfig& rbf, Warnings* warnings) {
  const auto json_path = dir / (id + ".attn.json");
  if (std::filesystem::exists(json_path)) {
    const AttentionSpec spec = parse_attention_points(read_file(json_path), warnings);
    return rasterize_attention(spec, height, width, rbf, warnings);
  }
  const auto amap_path = dir / (id + ".amap");
  if (std::filesystem::exists(amap_path)) return resample_attention(read_attention_map(amap_path), height, width);
  throw Error(ErrorCode::MissingAttention, "no " + id + ".attn.json or " + id + ".amap in " + dir.string());
}

WeightMap effective_weights(const FeatureMap& fmap, const ModelProfile& profile, const AttentionMap* attn,
                            double alpha) {
  WeightMap base = base_weight_map(fmap, profile.gem.base_weights);
  if (!attn) return base;
  const AttentionMap& grid = (attn->height == fmap.height && attn->width == fmap.width)
                                 ? *attn
                                 : resample_attention(*attn, fmap.height, fmap.width);
  return blend_weights(base, grid, alpha);
}

Descriptor describe(const ImageFeatures& feats, const ModelProfile& profile, const AttentionMap* attn,
                    double alpha) {
  Descriptor raw;
  if (profile.aggregator == AggregatorKind::Gem) {
    if (!feats.fmap) throw Error(ErrorCode::InvalidArgument, "'" + feats.id + "': GeM profile needs a feature map");
    raw = gem_pool(*feats.fmap, profile.gem, effective_weights(*feats.fmap, profile, attn, alpha));
  } else {
    if (!feats.local || !feats.assign) {
      throw Error(ErrorCode::InvalidArgument, "'" + feats.id + "': cluster profile needs .lfeat and .amat");
    }
    std::vector<float> scale(feats.local->units, 1.0f);
    if (attn) {
      const AttentionMap grid = (attn->height == feats.grid_height && attn->width == feats.grid_width)
                                    ? *attn
                                    : resample_attention(*attn, feats.grid_height, feats.grid_width);
      scale = grid.values;
    }
    raw = cluster_aggregate(*feats.local, *feats.assign, scale, BlendConfig{attn ? alpha : 0.0, attn ? profile.cluster_mode : ClusterMode::Blended},
                            feats.class_token);
  }
  if (profile.descriptor_dim != 0 && raw.size() != profile.descriptor_dim) {
    throw Error(ErrorCode::DimMismatch, "'" + feats.id + "': descriptor has dim " + std::to_string(raw.size()) +
                                            ", profile declares " + std::to_string(profile.descriptor_dim));
  }
  return l2_normalize(raw);
}

QuerySet load_query_set(const std::filesystem::path& features_dir, const Manifest& manifest,
                        const ModelProfile& profile, const std::optional<std::filesystem::path>& attention_dir,
                        unsigned threads, Warnings* warnings) {
  QuerySet set;
  set.manifest = manifest;
  const std::size_t n = manifest.size();
  set.features.resize(n);
  set.attention.resize(n);
  std::vector<Warnings> per_item(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto& entry = manifest.entries()[i];
    set.features[i] = load_image_features(features_dir, entry.id, profile);
    if (attention_dir) {
      set.attention[i] = load_attention(*attention_dir, entry.id, set.features[i].grid_height,
                                        set.features[i].grid_width, profile.rbf, &per_item[i]);
    }
  });
  if (warnings) {
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& w : per_item[i]) warnings->push_back(manifest.entries()[i].id + ": " + w);
    }
  }
  return set;
}

DescriptorDb aggregate_query_set(const QuerySet& set, const ModelProfile& profile, double alpha, unsigned threads) {
  const std::size_t n = set.features.size();
  std::vector<Descriptor> descriptors(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const AttentionMap* attn = set.attention[i] ? &*set.attention[i] : nullptr;
    descriptors[i] = describe(set.features[i], profile, attn, alpha);
  });
  DescriptorDb db;
  db.dim = n == 0 ? profile.descriptor_dim : static_cast<std::uint32_t>(descriptors.front().size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = set.manifest.entries()[i];
    db.append(e.id, e.geo, descriptors[i]);
  }
  return db;
}

}  // namespace attnvpr
