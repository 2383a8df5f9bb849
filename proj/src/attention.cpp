#include "attnvpr/attention.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "attnvpr/error.hpp"
#include "attnvpr/file_util.hpp"
#include "attnvpr/rbf.hpp"

namespace attnvpr {

namespace {

constexpr std::string_view kAmapMagic{"AMP1\0", 5};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Strips ``` fences and matching outer quotes that chat models like to add.
std::string_view unwrap(std::string_view s) {
  s = trim(s);
  if (s.starts_with("```")) {
    auto nl = s.find('\n');
    s = nl == std::string_view::npos ? s.substr(3) : s.substr(nl + 1);
    if (auto end = s.rfind("```"); end != std::string_view::npos) s = s.substr(0, end);
    s = trim(s);
  }
  while (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    s = trim(s.substr(1, s.size() - 2));
  }
  return s;
}

bool is_none_token(std::string_view s) {
  if (s.size() != 4) return false;
  return (s[0] == 'N' || s[0] == 'n') && (s[1] == 'o' || s[1] == 'O') && (s[2] == 'n' || s[2] == 'N') &&
         (s[3] == 'e' || s[3] == 'E');
}

double read_number(const nlohmann::json& j, const char* what) {
  if (!j.is_number()) throw Error(ErrorCode::UnparseableResponse, std::string(what) + " is not a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw Error(ErrorCode::UnparseableResponse, std::string(what) + " is not finite");
  return v;
}

}  // namespace

AttentionMap AttentionMap::uniform(std::uint32_t height, std::uint32_t width, float value) {
  AttentionMap m;
  m.height = height;
  m.width = width;
  m.values.assign(std::size_t{height} * width, value);
  return m;
}

void AttentionMap::validate() const {
  if (height == 0 || width == 0 || values.size() != std::size_t{height} * width) {
    throw Error(ErrorCode::ShapeMismatch, "attention map shape inconsistent");
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "attention map contains NaN or Inf");
    if (v < kMinAttention || v > kMaxAttention) {
      throw Error(ErrorCode::InvalidArgument, "attention value outside [0,2]");
    }
  }
}

AttentionSpec parse_attention_points(std::string_view text, Warnings* warnings) {
  std::string_view body = unwrap(text);
  if (is_none_token(body)) return AttentionSpec{SingleLandmark{}};

  nlohmann::json doc = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) {
    // Tolerate prose around the array.
    const auto open = body.find('[');
    const auto close = body.rfind(']');
    if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
      doc = nlohmann::json::parse(body.substr(open, close - open + 1), nullptr, false);
    }
  }
  if (doc.is_discarded()) {
    throw Error(ErrorCode::UnparseableResponse, "response is neither None nor a JSON array");
  }
  if (doc.is_string() && is_none_token(trim(doc.get<std::string>()))) return AttentionSpec{SingleLandmark{}};
  if (!doc.is_array()) throw Error(ErrorCode::UnparseableResponse, "response JSON is not an array");
  if (doc.empty()) throw Error(ErrorCode::EmptyPointList, "response array has no points");
  if (doc.size() > kMaxAttentionPoints) {
    throw Error(ErrorCode::UnparseableResponse,
                "response has " + std::to_string(doc.size()) + " points, at most 16 accepted");
  }

  std::vector<AttentionPoint> points;
  points.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& entry = doc[i];
    if (!entry.is_object() || !entry.contains("center") || !entry.contains("weight")) {
      throw Error(ErrorCode::UnparseableResponse, "point " + std::to_string(i) + " lacks center/weight");
    }
    const auto& center = entry["center"];
    if (!center.is_array() || center.size() != 2) {
      throw Error(ErrorCode::UnparseableResponse, "point " + std::to_string(i) + " center is not [x, y]");
    }
    AttentionPoint p;
    p.x = read_number(center[0], "center x");
    p.y = read_number(center[1], "center y");
    if (p.x < 0.0 || p.x > 1.0 || p.y < 0.0 || p.y > 1.0) {
      throw Error(ErrorCode::CoordinateOutOfRange, "point " + std::to_string(i) + " center outside [0,1]");
    }
    p.weight = read_number(entry["weight"], "weight");
    if (p.weight < kMinAttention || p.weight > kMaxAttention) {
      const double clamped = std::clamp(p.weight, kMinAttention, kMaxAttention);
      if (warnings) {
        warnings->push_back("point " + std::to_string(i) + " weight " + nlohmann::json(p.weight).dump() +
                            " clamped to " + nlohmann::json(clamped).dump());
      }
      p.weight = clamped;
    }
    if (entry.contains("reasoning") && entry["reasoning"].is_string()) {
      p.reasoning = entry["reasoning"].get<std::string>();
    }
    points.push_back(std::move(p));
  }
  return AttentionSpec{std::move(points)};
}

std::string format_attention_spec(const AttentionSpec& spec) {
  if (spec.is_single_landmark()) return "None";
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : spec.points()) {
    arr.push_back({{"center", {p.x, p.y}}, {"weight", p.weight}, {"reasoning", p.reasoning}});
  }
  return arr.dump(2);
}

RbfSurface::RbfSurface(std::vector<AttentionPoint> points, const RbfConfig& cfg, Warnings* warnings)
    : points_(std::move(points)), inv_two_sigma_sq_(1.0 / (2.0 * cfg.sigma * cfg.sigma)) {
  if (!(cfg.sigma > 0.0) || !std::isfinite(cfg.sigma)) {
    throw Error(ErrorCode::InvalidArgument, "RBF sigma must be positive");
  }
  coeffs_.resize(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) coeffs_[i] = points_[i].weight - 1.0;
  if (cfg.mode != RbfMode::ExactInterp || points_.empty()) return;

  const auto n = static_cast<Eigen::Index>(points_.size());
  Eigen::MatrixXd phi(n, n);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    rhs(a) = coeffs_[a];
    for (Eigen::Index b = 0; b < n; ++b) phi(a, b) = kernel(points_[a].x - points_[b].x, points_[a].y - points_[b].y);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(phi);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible()) {
    if (warnings) {
      warnings->push_back(std::string(error_name(ErrorCode::SingularKernel)) +
                          ": kernel matrix is singular (duplicate centers); using superposition");
    }
    return;
  }
  const Eigen::VectorXd lambda = lu.solve(rhs);
  for (Eigen::Index a = 0; a < n; ++a) coeffs_[a] = lambda(a);
  exact_ = true;
}

double RbfSurface::kernel(double dx, double dy) const noexcept {
  return std::exp(-(dx * dx + dy * dy) * inv_two_sigma_sq_);
}

double RbfSurface::operator()(double x, double y) const noexcept {
  double v = 1.0;
  for (std::size_t i = 0; i < points_.size(); ++i) v += coeffs_[i] * kernel(x - points_[i].x, y - points_[i].y);
  return v;
}

AttentionMap rasterize_attention(const AttentionSpec& spec, std::uint32_t height, std::uint32_t width,
                                 const RbfConfig& cfg, Warnings* warnings) {
  if (height == 0 || width == 0) throw Error(ErrorCode::InvalidArgument, "attention grid must be at least 1x1");
  if (spec.is_single_landmark()) return AttentionMap::uniform(height, width, 1.0f);

  const RbfSurface surface(spec.points(), cfg, warnings);
  AttentionMap map = AttentionMap::uniform(height, width);
  for (std::uint32_t i = 0; i < height; ++i) {
    const double y = (i + 0.5) / height;
    for (std::uint32_t j = 0; j < width; ++j) {
      const double x = (j + 0.5) / width;
      map.values[std::size_t{i} * width + j] =
          static_cast<float>(std::clamp(surface(x, y), kMinAttention, kMaxAttention));
    }
  }
  return map;
}

AttentionMap resample_attention(const AttentionMap& map, std::uint32_t height, std::uint32_t width) {
  map.validate();
  if (height == 0 || width == 0) throw Error(ErrorCode::InvalidArgument, "attention grid must be at least 1x1");
  if (map.height == height && map.width == width) return map;

  auto source_coord = [](std::uint32_t dst, std::uint32_t dst_n, std::uint32_t src_n) {
    const double s = (dst + 0.5) * static_cast<double>(src_n) / dst_n - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(src_n - 1));
  };

  AttentionMap out = AttentionMap::uniform(height, width);
  for (std::uint32_t i = 0; i < height; ++i) {
    const double sy = source_coord(i, height, map.height);
    const auto y0 = static_cast<std::uint32_t>(sy);
    const std::uint32_t y1 = std::min(y0 + 1, map.height - 1);
    const double fy = sy - y0;
    for (std::uint32_t j = 0; j < width; ++j) {
      const double sx = source_coord(j, width, map.width);
      const auto x0 = static_cast<std::uint32_t>(sx);
      const std::uint32_t x1 = std::min(x0 + 1, map.width - 1);
      const double fx = sx - x0;
      const double top = (1.0 - fx) * map.at(y0, x0) + fx * map.at(y0, x1);
      const double bottom = (1.0 - fx) * map.at(y1, x0) + fx * map.at(y1, x1);
      const double v = (1.0 - fy) * top + fy * bottom;
      out.values[std::size_t{i} * width + j] = static_cast<float>(std::clamp(v, kMinAttention, kMaxAttention));
    }
  }
  return out;
}

AttentionMap read_attention_map(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, path.string());
  r.expect_magic(kAmapMagic);
  AttentionMap map;
  map.height = r.u32();
  map.width = r.u32();
  map.values = r.f32_payload(std::size_t{map.height} * map.width);
  map.validate();
  return map;
}

void write_attention_map(const AttentionMap& map, const std::filesystem::path& path) {
  map.validate();
  ByteWriter w;
  w.magic(kAmapMagic);
  w.u32(map.height);
  w.u32(map.width);
  w.f32(map.values);
  atomic_write(path, w.bytes());
}

}  // namespace attnvpr
