#include "attnvpr/llm_client.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <openssl/evp.h>

#include "attnvpr/error.hpp"
#include "attnvpr/file_util.hpp"

#ifndef ATTNVPR_ASSET_DIR_DEFAULT
#define ATTNVPR_ASSET_DIR_DEFAULT "assets"
#endif

namespace attnvpr {

namespace {

// 5x7 glyphs for tick labels; bit 4 is the leftmost column.
constexpr std::array<std::array<std::uint8_t, 7>, 11> kGlyphs{{
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
    {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C},  // .
}};
constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;

void put(RgbImage& img, long x, long y, std::uint8_t v) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) return;
  auto* p = img.at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y));
  p[0] = p[1] = p[2] = v;
}

long text_width(const std::string& s, int scale) { return static_cast<long>(s.size()) * (kGlyphW + 1) * scale - scale; }

// Draws `s` with its top-left corner at (x, y). Pixels outside the margin
// band given by `clip` are never touched.
void draw_text(RgbImage& img, const std::string& s, long x, long y, int scale,
               const std::function<bool(long, long)>& clip) {
  for (char ch : s) {
    const std::size_t g = ch == '.' ? 10 : static_cast<std::size_t>(ch - '0');
    for (int row = 0; row < kGlyphH; ++row) {
      for (int col = 0; col < kGlyphW; ++col) {
        if (!(kGlyphs[g][row] & (0x10 >> col))) continue;
        for (int dy = 0; dy < scale; ++dy) {
          for (int dx = 0; dx < scale; ++dx) {
            const long px = x + col * scale + dx;
            const long py = y + row * scale + dy;
            if (clip(px, py)) put(img, px, py, 0);
          }
        }
      }
    }
    x += (kGlyphW + 1) * scale;
  }
}

std::string base64(const std::string& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

// Pulls the model text out of common chat-completion envelopes; anything else
// is handed to the parser verbatim.
std::string extract_text(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return body;
  try {
    if (j.contains("choices")) return j.at("choices").at(0).at("message").at("content").get<std::string>();
    if (j.contains("candidates")) {
      return j.at("candidates").at(0).at("content").at("parts").at(0).at("text").get<std::string>();
    }
    if (j.contains("text") && j["text"].is_string()) return j["text"].get<std::string>();
  } catch (const nlohmann::json::exception&) {
  }
  return body;
}

struct SplitUrl {
  std::string base;
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(ErrorCode::InvalidArgument, "endpoint '" + url + "' lacks a scheme");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

enum class Outcome { Ok, Transient, Fatal };

struct HttpReply {
  Outcome outcome = Outcome::Ok;
  std::string text;
  std::string detail;
};

HttpReply http_call(const HttpProvider& http, const std::string& api_key, const std::string& prompt,
                    const std::string& png) {
  const SplitUrl url = split_url(http.endpoint_url);
  httplib::Client client(url.base);
  const auto timeout = std::chrono::duration<double>(http.timeout_s);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", prompt}});
  if (!png.empty()) {
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64(png)}}}});
  }
  const nlohmann::json body = {{"model", http.model}, {"messages", {{{"role", "user"}, {"content", content}}}}};
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

  auto res = client.Post(url.path, headers, body.dump(), "application/json");
  if (!res) return {Outcome::Transient, {}, "connection failed: " + httplib::to_string(res.error())};
  if (res->status == 429 || res->status >= 500) {
    return {Outcome::Transient, {}, "HTTP " + std::to_string(res->status)};
  }
  if (res->status < 200 || res->status >= 300) return {Outcome::Fatal, {}, "HTTP " + std::to_string(res->status)};
  return {Outcome::Ok, extract_text(res->body), {}};
}

void cache_response(const RequestOptions& options, const std::string& id, const std::string& text) {
  if (options.cache_dir) atomic_write(*options.cache_dir / (id + ".attn.json"), text);
}

}  // namespace

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  PromptTemplate t{read_file(path)};
  if (t.body.find("{city}") == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "prompt template " + path.string() + " has no {city} placeholder");
  }
  return t;
}

std::string PromptTemplate::render(const std::string& city) const {
  if (city.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::EmptyCity, "city must be non-empty");
  }
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto hit = body.find("{city}", pos);
    if (hit == std::string::npos) break;
    out.append(body, pos, hit - pos);
    out += city;
    pos = hit + 6;
  }
  out.append(body, pos);
  return out;
}

std::filesystem::path asset_dir() {
  if (const char* env = std::getenv("ATTNVPR_ASSET_DIR"); env && *env) return env;
  return ATTNVPR_ASSET_DIR_DEFAULT;
}

const PromptTemplate& default_prompt_template() {
  static const PromptTemplate tmpl = PromptTemplate::load(asset_dir() / "prompts" / "vpr_attention_weighting.txt");
  return tmpl;
}

std::string build_prompt(const std::string& city, const PromptTemplate& tmpl) { return tmpl.render(city); }

RgbImage load_image(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(ErrorCode::IoFailure, "cannot decode image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage img{static_cast<std::uint32_t>(rgb.cols), static_cast<std::uint32_t>(rgb.rows), {}};
  img.pixels.resize(std::size_t{img.width} * img.height * 3);
  for (int y = 0; y < rgb.rows; ++y) {
    std::memcpy(img.pixels.data() + std::size_t(y) * img.width * 3, rgb.ptr(y), std::size_t{img.width} * 3);
  }
  return img;
}

std::string encode_png(const RgbImage& image) {
  cv::Mat rgb(static_cast<int>(image.height), static_cast<int>(image.width), CV_8UC3,
              const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  std::vector<unsigned char> buf;
  if (!cv::imencode(".png", bgr, buf)) throw Error(ErrorCode::IoFailure, "PNG encoding failed");
  return std::string(buf.begin(), buf.end());
}

RgbImage AnnotatedImage::crop_original() const {
  RgbImage out{original_width, original_height, std::vector<std::uint8_t>(std::size_t{original_width} * original_height * 3)};
  for (std::uint32_t y = 0; y < original_height; ++y) {
    std::memcpy(out.at(0, y), canvas.at(margin, margin + y), std::size_t{original_width} * 3);
  }
  return out;
}

AnnotatedImage compose_axis_image(const RgbImage& image) {
  if (image.width == 0 || image.height == 0 || image.pixels.size() != std::size_t{image.width} * image.height * 3) {
    throw Error(ErrorCode::InvalidArgument, "image is empty or has an inconsistent pixel buffer");
  }
  AnnotatedImage out;
  out.original_width = image.width;
  out.original_height = image.height;
  out.margin = kAxisMargin;
  const std::uint32_t m = out.margin;
  out.canvas = RgbImage{image.width + m, image.height + m, {}};
  out.canvas.pixels.assign(std::size_t{out.canvas.width} * out.canvas.height * 3, 255);
  for (std::uint32_t y = 0; y < image.height; ++y) {
    std::memcpy(out.canvas.at(m, m + y), image.at(0, y), std::size_t{image.width} * 3);
  }

  const long mm = m;
  auto in_margin = [mm](long x, long y) { return x < mm || y < mm; };
  const int scale = std::max(image.width, image.height) >= 300 ? 2 : 1;
  const long tick_len = 4;

  // Axis lines hug the frame from outside.
  for (long x = mm - 1; x < static_cast<long>(out.canvas.width); ++x) put(out.canvas, x, mm - 1, 0);
  for (long y = mm - 1; y < static_cast<long>(out.canvas.height); ++y) put(out.canvas, mm - 1, y, 0);

  for (int t = 0; t < kAxisTicks; ++t) {
    const double v = t / static_cast<double>(kAxisTicks - 1);
    char label[8];
    std::snprintf(label, sizeof(label), "%.1f", v);
    const std::string text(label);

    const long tx = std::lround(out.x_pixel(v));
    for (long d = 1; d <= tick_len; ++d) put(out.canvas, std::min(tx, static_cast<long>(out.canvas.width) - 1), mm - 1 - d, 0);
    const long tw = text_width(text, scale);
    const long lx = std::min(tx - tw / 2, static_cast<long>(out.canvas.width) - tw);
    draw_text(out.canvas, text, lx, mm - 1 - tick_len - 2 - kGlyphH * scale, scale, in_margin);

    const long ty = std::lround(out.y_pixel(v));
    for (long d = 1; d <= tick_len; ++d) put(out.canvas, mm - 1 - d, std::min(ty, static_cast<long>(out.canvas.height) - 1), 0);
    const long ly = std::min(ty - kGlyphH * scale / 2, static_cast<long>(out.canvas.height) - kGlyphH * scale);
    draw_text(out.canvas, text, mm - 1 - tick_len - 2 - tw, ly, scale, in_margin);
  }
  return out;
}

void ProviderConfig::validate() const {
  if (max_concurrent < 1) throw Error(ErrorCode::InvalidArgument, "max_concurrent must be >= 1");
  if (const auto* http = std::get_if<HttpProvider>(&kind)) {
    if (http->max_retries > 5) throw Error(ErrorCode::InvalidArgument, "max_retries must be <= 5");
    if (http->endpoint_url.empty()) throw Error(ErrorCode::InvalidArgument, "HTTP provider needs an endpoint URL");
  }
}

ProviderConfig parse_provider(const std::string& spec, const std::string& model) {
  ProviderConfig cfg;
  if (spec.starts_with("fixture:")) {
    cfg.kind = FixtureProvider{spec.substr(8)};
  } else if (spec.starts_with("http://") || spec.starts_with("https://")) {
    cfg.kind = HttpProvider{spec, model};
  } else if (spec.starts_with("http:")) {
    cfg.kind = HttpProvider{spec.substr(5), model};
  } else {
    throw Error(ErrorCode::InvalidArgument, "provider must be fixture:DIR or http:URL, got '" + spec + "'");
  }
  cfg.validate();
  return cfg;
}

AttentionResult request_attention(const std::string& image_id, const RgbImage* image, const std::string& city,
                                  const ProviderConfig& cfg, const RequestOptions& options,
                                  const PromptTemplate& tmpl) {
  cfg.validate();
  const std::string prompt = build_prompt(city, tmpl);
  AttentionResult result;
  result.image_id = image_id;

  if (options.reuse_cache && options.cache_dir) {
    const auto cached = *options.cache_dir / (image_id + ".attn.json");
    if (std::filesystem::exists(cached)) {
      try {
        result.raw_response = read_file(cached);
        result.spec = parse_attention_points(result.raw_response, &result.warnings);
        return result;
      } catch (const Error&) {
        result.warnings.clear();
      }
    }
  }

  if (const auto* fixture = std::get_if<FixtureProvider>(&cfg.kind)) {
    const auto path = fixture->directory / (image_id + ".attn.json");
    if (!std::filesystem::exists(path)) {
      throw Error(ErrorCode::FixtureMissing, image_id + ".attn.json not found in " + fixture->directory.string());
    }
    result.raw_response = read_file(path);
    cache_response(options, image_id, result.raw_response);
    result.spec = parse_attention_points(result.raw_response, &result.warnings);
    return result;
  }

  const auto& http = std::get<HttpProvider>(cfg.kind);
  const char* key = std::getenv(http.api_key_env.c_str());
  if (!key) throw Error(ErrorCode::ProviderUnavailable, "environment variable " + http.api_key_env + " is not set");
  if (!image) throw Error(ErrorCode::InvalidArgument, "HTTP provider needs the query image");
  const std::string png = encode_png(compose_axis_image(*image).canvas);

  std::string last_failure;
  bool any_reply = false;
  for (unsigned attempt = 0; attempt <= http.max_retries; ++attempt) {
    if (attempt > 0) {
      const double delay = http.backoff_initial_s * std::pow(http.backoff_multiplier, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    const HttpReply reply = http_call(http, key, prompt, png);
    if (reply.outcome == Outcome::Fatal) {
      throw Error(ErrorCode::ProviderUnavailable, image_id + ": " + reply.detail);
    }
    if (reply.outcome == Outcome::Transient) {
      last_failure = reply.detail;
      continue;
    }
    any_reply = true;
    cache_response(options, image_id, reply.text);
    Warnings warnings;
    try {
      result.spec = parse_attention_points(reply.text, &warnings);
    } catch (const Error& e) {
      last_failure = e.what();
      continue;
    }
    result.raw_response = reply.text;
    result.retries = attempt;
    result.warnings = std::move(warnings);
    return result;
  }
  if (!any_reply) throw Error(ErrorCode::ProviderUnavailable, image_id + ": " + last_failure);
  throw Error(ErrorCode::ExhaustedRetries, image_id + ": no valid response after " +
                                               std::to_string(http.max_retries + 1) + " attempts (" + last_failure + ")");
}

std::vector<AttentionResult> request_attention_batch(const std::vector<AttentionRequest>& requests,
                                                     const std::string& city, const ProviderConfig& cfg,
                                                     const RequestOptions& options, const PromptTemplate& tmpl) {
  cfg.validate();
  build_prompt(city, tmpl);
  const bool needs_image = std::holds_alternative<HttpProvider>(cfg.kind);
  std::vector<AttentionResult> results(requests.size());
  std::vector<std::exception_ptr> errors(requests.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= requests.size()) return;
      try {
        std::optional<RgbImage> image;
        if (needs_image && !(options.reuse_cache && options.cache_dir &&
                             std::filesystem::exists(*options.cache_dir / (requests[i].image_id + ".attn.json")))) {
          if (!requests[i].image_path) {
            throw Error(ErrorCode::InvalidArgument, requests[i].image_id + ": no image path for HTTP provider");
          }
          image = load_image(*requests[i].image_path);
        }
        results[i] = request_attention(requests[i].image_id, image ? &*image : nullptr, city, cfg, options, tmpl);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const std::size_t workers = std::min<std::size_t>(cfg.max_concurrent, std::max<std::size_t>(requests.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace attnvpr
