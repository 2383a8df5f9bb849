#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "attnvpr/aggregation.hpp"
#include "attnvpr/attention.hpp"
#include "attnvpr/tensor_io.hpp"

namespace attnvpr {

enum class AggregatorKind { Gem, Cluster };

/// Per-model aggregation settings, read from a `model.toml`-style key/value file:
///
///   aggregator = "gem"        # gem | cluster
///   p = 3.0
///   base_weights = "uniform"  # uniform | activation_norm
///   descriptor_dim = 512
///   cluster_mode = "blended"  # blended | literal
///   class_token_dim = 0
///   grid_height = 7           # cluster models: unit grid for attention
///   grid_width = 7
///   rbf_sigma = 0.2
///   rbf_mode = "superposition" # superposition | exact
///   tap_point = "..."         # informational, written by the exporter
struct ModelProfile {
  AggregatorKind aggregator = AggregatorKind::Gem;
  GemParams gem;
  std::uint32_t descriptor_dim = 0;
  ClusterMode cluster_mode = ClusterMode::Blended;
  std::uint32_t class_token_dim = 0;
  std::uint32_t grid_height = 0;
  std::uint32_t grid_width = 0;
  RbfConfig rbf;
  std::string tap_point;
};

ModelProfile parse_profile(const std::string& text);
ModelProfile load_profile(const std::filesystem::path& path);
std::string format_profile(const ModelProfile& profile);

/// Everything the aggregator needs for one image: `<id>.fmap` for GeM models,
/// `<id>.lfeat` + `<id>.amat` (+ `<id>.ctok`, a one-column LFT1 file) for
/// cluster models.
struct ImageFeatures {
  std::string id;
  std::optional<FeatureMap> fmap;
  std::optional<LocalFeatures> local;
  std::optional<AssignmentMatrix> assign;
  std::vector<float> class_token;
  std::uint32_t grid_height = 0;
  std::uint32_t grid_width = 0;
};

ImageFeatures load_image_features(const std::filesystem::path& dir, const std::string& id,
                                  const ModelProfile& profile);

/// Resolves a query's attention on the given grid: `<id>.attn.json` is parsed
/// and rasterized, otherwise a cached `<id>.amap` is resampled.
AttentionMap load_attention(const std::filesystem::path& dir, const std::string& id, std::uint32_t height,
                            std::uint32_t width, const RbfConfig& rbf, Warnings* warnings = nullptr);

/// Normalized global descriptor. With no attention (database side), this is
/// the model's native aggregation.
Descriptor describe(const ImageFeatures& feats, const ModelProfile& profile, const AttentionMap* attn,
                    double alpha);

/// Weight map the GeM aggregator applies for this query (native weights when
/// `attn` is null).
WeightMap effective_weights(const FeatureMap& fmap, const ModelProfile& profile, const AttentionMap* attn,
                            double alpha);

/// Pre-loaded query set reused across alpha values.
struct QuerySet {
  Manifest manifest;
  std::vector<ImageFeatures> features;
  std::vector<std::optional<AttentionMap>> attention;
};

QuerySet load_query_set(const std::filesystem::path& features_dir, const Manifest& manifest,
                        const ModelProfile& profile, const std::optional<std::filesystem::path>& attention_dir,
                        unsigned threads = 1, Warnings* warnings = nullptr);

DescriptorDb aggregate_query_set(const QuerySet& set, const ModelProfile& profile, double alpha,
                                 unsigned threads = 1);

}  // namespace attnvpr
