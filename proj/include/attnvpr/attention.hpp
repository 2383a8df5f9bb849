#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace attnvpr {

/// One LLM-reported region: normalized center ((0,0) top-left, x right,
/// y down) and an importance weight where 1.0 is neutral.
struct AttentionPoint {
  double x = 0.0;
  double y = 0.0;
  double weight = 1.0;
  std::string reasoning;
};

/// The literal "None" response: the scene is one cohesive landmark and
/// receives no spatial modulation.
struct SingleLandmark {};

struct AttentionSpec {
  std::variant<SingleLandmark, std::vector<AttentionPoint>> kind;

  bool is_single_landmark() const noexcept { return std::holds_alternative<SingleLandmark>(kind); }
  const std::vector<AttentionPoint>& points() const { return std::get<std::vector<AttentionPoint>>(kind); }
};

inline constexpr double kMinAttention = 0.0;
inline constexpr double kMaxAttention = 2.0;
inline constexpr std::size_t kMaxAttentionPoints = 16;

/// H x W surface, row-major, every value in [0, 2].
struct AttentionMap {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> values;

  static AttentionMap uniform(std::uint32_t height, std::uint32_t width, float value = 1.0f);
  float at(std::size_t i, std::size_t j) const { return values[i * width + j]; }
  void validate() const;
};

enum class RbfMode { Superposition, ExactInterp };

struct RbfConfig {
  double sigma = 0.2;
  RbfMode mode = RbfMode::Superposition;
};

/// Warnings are appended to `warnings` when it is non-null.
using Warnings = std::vector<std::string>;

AttentionSpec parse_attention_points(std::string_view text, Warnings* warnings = nullptr);

/// Serializes a spec back to the response format (the literal `None` or a JSON array).
std::string format_attention_spec(const AttentionSpec& spec);

AttentionMap rasterize_attention(const AttentionSpec& spec, std::uint32_t height, std::uint32_t width,
                                 const RbfConfig& cfg = {}, Warnings* warnings = nullptr);

/// Bilinear resampling evaluated at target cell centers, clamped to [0, 2].
AttentionMap resample_attention(const AttentionMap& map, std::uint32_t height, std::uint32_t width);

AttentionMap read_attention_map(const std::filesystem::path& path);
void write_attention_map(const AttentionMap& map, const std::filesystem::path& path);

}  // namespace attnvpr
