#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "attnvpr/attention.hpp"

namespace attnvpr {

/// Prompt text with one or more `{city}` placeholders.
struct PromptTemplate {
  std::string body;

  static PromptTemplate load(const std::filesystem::path& path);
  std::string render(const std::string& city) const;
};

/// Directory holding `prompts/*.txt`: $ATTNVPR_ASSET_DIR if set, otherwise the
/// install/source location baked in at build time.
std::filesystem::path asset_dir();

/// Scene-composition weighting prompt shipped under assets/prompts/.
const PromptTemplate& default_prompt_template();

std::string build_prompt(const std::string& city, const PromptTemplate& tmpl = default_prompt_template());

/// 8-bit RGB raster, interleaved, row-major.
struct RgbImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t* at(std::uint32_t x, std::uint32_t y) { return &pixels[(std::size_t{y} * width + x) * 3]; }
  const std::uint8_t* at(std::uint32_t x, std::uint32_t y) const {
    return &pixels[(std::size_t{y} * width + x) * 3];
  }
};

RgbImage load_image(const std::filesystem::path& path);
std::string encode_png(const RgbImage& image);

inline constexpr std::uint32_t kAxisMargin = 40;
inline constexpr int kAxisTicks = 6;

/// Query image placed at (margin, margin) on a larger canvas whose top and
/// left margins carry normalized 0.0-1.0 axes.
struct AnnotatedImage {
  RgbImage canvas;
  std::uint32_t original_width = 0;
  std::uint32_t original_height = 0;
  std::uint32_t margin = kAxisMargin;

  /// Canvas column of normalized x coordinate `t`.
  double x_pixel(double t) const { return margin + t * original_width; }
  double y_pixel(double t) const { return margin + t * original_height; }
  RgbImage crop_original() const;
};

AnnotatedImage compose_axis_image(const RgbImage& image);

struct HttpProvider {
  std::string endpoint_url;
  std::string model;
  std::string api_key_env = "ATTNVPR_API_KEY";
  double timeout_s = 60.0;
  unsigned max_retries = 3;
  double backoff_initial_s = 1.0;
  double backoff_multiplier = 2.0;
};

struct FixtureProvider {
  std::filesystem::path directory;
};

struct ProviderConfig {
  std::variant<HttpProvider, FixtureProvider> kind;
  unsigned max_concurrent = 4;

  void validate() const;
};

/// Parses `fixture:DIR` or `http[s]://...` (the `http:` prefix may be written
/// as `http:URL`).
ProviderConfig parse_provider(const std::string& spec, const std::string& model = {});

struct AttentionResult {
  std::string image_id;
  AttentionSpec spec;
  std::string raw_response;
  /// Attempts beyond the first.
  unsigned retries = 0;
  Warnings warnings;
};

struct AttentionRequest {
  std::string image_id;
  /// Needed only by HTTP providers.
  std::optional<std::filesystem::path> image_path;
};

struct RequestOptions {
  /// Raw responses are written to `<cache_dir>/<id>.attn.json` before parsing.
  std::optional<std::filesystem::path> cache_dir;
  /// Reuse a parseable cached response instead of calling the provider.
  bool reuse_cache = false;
};

AttentionResult request_attention(const std::string& image_id, const RgbImage* image, const std::string& city,
                                  const ProviderConfig& cfg, const RequestOptions& options = {},
                                  const PromptTemplate& tmpl = default_prompt_template());

/// Dispatches requests with at most `cfg.max_concurrent` in flight. Results
/// keep input order; the first failure by index is rethrown.
std::vector<AttentionResult> request_attention_batch(const std::vector<AttentionRequest>& requests,
                                                     const std::string& city, const ProviderConfig& cfg,
                                                     const RequestOptions& options = {},
                                                     const PromptTemplate& tmpl = default_prompt_template());

}  // namespace attnvpr
