#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "attnvpr/attention.hpp"
#include "attnvpr/tensor_io.hpp"

namespace attnvpr {

enum class BaseWeights {
  UniformOnes,
  /// Per-cell L2 norm of the activation column, divided by its spatial mean.
  ActivationNorm,
};

struct GemParams {
  double p = 3.0;
  BaseWeights base_weights = BaseWeights::UniformOnes;
};

/// Nonnegative spatial weights over an H x W grid, row-major.
struct WeightMap {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> values;

  static WeightMap uniform(std::uint32_t height, std::uint32_t width, float value = 1.0f);
  static WeightMap from_attention(const AttentionMap& map);
  void validate() const;
};

enum class ClusterMode {
  /// s_j = 1 + alpha (A_j - 1); alpha = 0 reproduces the unmodulated aggregation.
  Blended,
  /// s_j = alpha A_j, the literal magnitude modulator. Zero at alpha = 0 and
  /// alpha-invariant after normalization.
  Literal,
};

struct BlendConfig {
  double alpha = 0.0;
  ClusterMode cluster_mode = ClusterMode::Blended;
};

using Descriptor = std::vector<float>;

/// W_final = W_base + alpha (A - W_base), evaluated as (1 - alpha) W_base + alpha A
/// so that both endpoints are reproduced exactly.
WeightMap blend_weights(const WeightMap& base, const AttentionMap& attn, double alpha);

/// Native spatial weights of the GeM aggregator for this feature map.
WeightMap base_weight_map(const FeatureMap& fm, BaseWeights mode);

/// y_c = (sum W x_c^p / sum W)^(1/p); returns the raw (unnormalized) vector.
Descriptor gem_pool(const FeatureMap& fm, const GemParams& params, const WeightMap& weights);

/// V_{:,k} = sum_j P_{k,j} s_j F_{:,j}, clusters concatenated in k order, then the
/// optional class token appended unmodified. `attn` is indexed by unit j.
Descriptor cluster_aggregate(const LocalFeatures& feats, const AssignmentMatrix& assign,
                             std::span<const float> attn, const BlendConfig& cfg,
                             std::span<const float> class_token = {});

Descriptor l2_normalize(std::span<const float> v);

/// Per-cell W_ij * sum_c x_cij^p, max-scaled into [0, 1] for visualization.
std::vector<float> contribution_map(const FeatureMap& fm, const WeightMap& weights, const GemParams& params);

}  // namespace attnvpr
