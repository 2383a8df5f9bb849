#include "attnvpr/aggregation.hpp"

#include <algorithm>
#include <cmath>

#include "attnvpr/error.hpp"

namespace attnvpr {

namespace {

void require_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0,1]");
}

double power(double x, double p) { return p == 1.0 ? x : std::pow(x, p); }

void require_gem_inputs(const FeatureMap& fm, const GemParams& params, const WeightMap& weights) {
  fm.validate();
  weights.validate();
  if (!(params.p >= 1.0) || !std::isfinite(params.p)) {
    throw Error(ErrorCode::InvalidArgument, "GeM exponent p must be >= 1");
  }
  if (weights.height != fm.height || weights.width != fm.width) {
    throw Error(ErrorCode::ShapeMismatch, "weight map is " + std::to_string(weights.height) + "x" +
                                              std::to_string(weights.width) + ", feature grid is " +
                                              std::to_string(fm.height) + "x" + std::to_string(fm.width));
  }
  for (float v : fm.data) {
    if (v < 0.0f) throw Error(ErrorCode::NegativeActivation, "feature map '" + fm.image_id + "' has negative activations");
  }
}

}  // namespace

WeightMap WeightMap::uniform(std::uint32_t height, std::uint32_t width, float value) {
  return WeightMap{height, width, std::vector<float>(std::size_t{height} * width, value)};
}

WeightMap WeightMap::from_attention(const AttentionMap& map) { return WeightMap{map.height, map.width, map.values}; }

void WeightMap::validate() const {
  if (height == 0 || width == 0 || values.size() != std::size_t{height} * width) {
    throw Error(ErrorCode::ShapeMismatch, "weight map shape inconsistent");
  }
  double sum = 0.0;
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "weight map contains NaN or Inf");
    if (v < 0.0f) throw Error(ErrorCode::InvalidArgument, "weight map has negative entries");
    sum += v;
  }
  if (!(sum > 0.0)) throw Error(ErrorCode::AllZeroWeights, "weight map sums to zero");
}

WeightMap blend_weights(const WeightMap& base, const AttentionMap& attn, double alpha) {
  require_alpha(alpha);
  if (base.height != attn.height || base.width != attn.width) {
    throw Error(ErrorCode::ShapeMismatch, "base weights and attention map differ in shape");
  }
  WeightMap out{base.height, base.width, std::vector<float>(base.values.size())};
  const double keep = 1.0 - alpha;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = static_cast<float>(keep * base.values[i] + alpha * attn.values[i]);
  }
  out.validate();
  return out;
}

WeightMap base_weight_map(const FeatureMap& fm, BaseWeights mode) {
  if (mode == BaseWeights::UniformOnes) return WeightMap::uniform(fm.height, fm.width);

  const std::size_t n = fm.units();
  std::vector<double> norms(n, 0.0);
  for (std::size_t c = 0; c < fm.channels; ++c) {
    const auto ch = fm.channel(c);
    for (std::size_t u = 0; u < n; ++u) norms[u] += double{ch[u]} * ch[u];
  }
  double mean = 0.0;
  for (auto& v : norms) {
    v = std::sqrt(v);
    mean += v;
  }
  mean /= static_cast<double>(n);
  // An all-zero map has no activation structure to weight by.
  if (!(mean > 0.0)) return WeightMap::uniform(fm.height, fm.width);
  WeightMap w{fm.height, fm.width, std::vector<float>(n)};
  for (std::size_t u = 0; u < n; ++u) w.values[u] = static_cast<float>(norms[u] / mean);
  return w;
}

Descriptor gem_pool(const FeatureMap& fm, const GemParams& params, const WeightMap& weights) {
  require_gem_inputs(fm, params, weights);
  const std::size_t n = fm.units();
  double weight_sum = 0.0;
  for (float w : weights.values) weight_sum += w;

  Descriptor out(fm.channels);
  for (std::size_t c = 0; c < fm.channels; ++c) {
    const auto ch = fm.channel(c);
    double acc = 0.0;
    for (std::size_t u = 0; u < n; ++u) acc += double{weights.values[u]} * power(ch[u], params.p);
    out[c] = static_cast<float>(power(acc / weight_sum, 1.0 / params.p));
  }
  return out;
}

Descriptor cluster_aggregate(const LocalFeatures& feats, const AssignmentMatrix& assign,
                             std::span<const float> attn, const BlendConfig& cfg,
                             std::span<const float> class_token) {
  require_alpha(cfg.alpha);
  feats.validate();
  assign.validate();
  const std::size_t n = feats.units;
  if (assign.units != n || attn.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "local features, assignments and attention disagree on unit count");
  }
  if (cfg.cluster_mode == ClusterMode::Literal && cfg.alpha == 0.0) {
    throw Error(ErrorCode::DegenerateScale, "literal modulation at alpha = 0 yields the zero descriptor; use blended mode");
  }

  std::vector<double> scale(n);
  for (std::size_t j = 0; j < n; ++j) {
    scale[j] = cfg.cluster_mode == ClusterMode::Blended ? 1.0 + cfg.alpha * (double{attn[j]} - 1.0)
                                                        : cfg.alpha * attn[j];
  }

  const std::size_t dim = feats.dim;
  Descriptor out(assign.clusters * dim + class_token.size());
  std::vector<double> acc(dim);
  for (std::size_t k = 0; k < assign.clusters; ++k) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double w = double{assign.at(k, j)} * scale[j];
      if (w == 0.0) continue;
      for (std::size_t d = 0; d < dim; ++d) acc[d] += w * feats.at(d, j);
    }
    for (std::size_t d = 0; d < dim; ++d) out[k * dim + d] = static_cast<float>(acc[d]);
  }
  std::copy(class_token.begin(), class_token.end(), out.begin() + static_cast<std::ptrdiff_t>(assign.clusters * dim));
  return out;
}

Descriptor l2_normalize(std::span<const float> v) {
  double sq = 0.0;
  for (float x : v) sq += double{x} * x;
  if (!(sq > 0.0) || !std::isfinite(sq)) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  Descriptor out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

std::vector<float> contribution_map(const FeatureMap& fm, const WeightMap& weights, const GemParams& params) {
  require_gem_inputs(fm, params, weights);
  const std::size_t n = fm.units();
  std::vector<double> contrib(n, 0.0);
  for (std::size_t c = 0; c < fm.channels; ++c) {
    const auto ch = fm.channel(c);
    for (std::size_t u = 0; u < n; ++u) contrib[u] += power(ch[u], params.p);
  }
  double peak = 0.0;
  for (std::size_t u = 0; u < n; ++u) {
    contrib[u] *= weights.values[u];
    peak = std::max(peak, contrib[u]);
  }
  std::vector<float> out(n, 0.0f);
  if (peak > 0.0) {
    for (std::size_t u = 0; u < n; ++u) out[u] = static_cast<float>(contrib[u] / peak);
  }
  return out;
}

}  // namespace attnvpr
