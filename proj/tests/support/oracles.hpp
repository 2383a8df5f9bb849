#pragma once

// Independent reference implementations for the tests. Everything here is
// written as plain loops over the textbook formulas and shares no code with
// the library beyond the data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "attnvpr/aggregation.hpp"
#include "attnvpr/attention.hpp"
#include "attnvpr/retrieval.hpp"
#include "attnvpr/tensor_io.hpp"

namespace attnvpr::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("attnvpr_" + tag + "_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(unit() * static_cast<double>(n)) % n; }
  std::uint32_t range(std::uint32_t lo, std::uint32_t hi) {
    return lo + static_cast<std::uint32_t>(index(std::size_t{hi} - lo + 1));
  }

 private:
  std::mt19937_64 engine_;
};

inline FeatureMap random_feature_map(Rng& rng, std::uint32_t c, std::uint32_t h, std::uint32_t w) {
  FeatureMap fm{"r", c, h, w, {}};
  fm.data.resize(std::size_t{c} * h * w);
  for (auto& v : fm.data) v = static_cast<float>(rng.uniform(0.0, 2.0));
  return fm;
}

inline AttentionMap random_attention(Rng& rng, std::uint32_t h, std::uint32_t w) {
  AttentionMap a{h, w, {}};
  a.values.resize(std::size_t{h} * w);
  for (auto& v : a.values) v = static_cast<float>(rng.uniform(0.0, 2.0));
  return a;
}

inline LocalFeatures random_local(Rng& rng, std::uint32_t d, std::uint32_t n) {
  LocalFeatures lf{"r", d, n, {}};
  lf.values.resize(std::size_t{d} * n);
  for (auto& v : lf.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return lf;
}

inline AssignmentMatrix random_assignment(Rng& rng, std::uint32_t k, std::uint32_t n) {
  AssignmentMatrix am{"r", k, n, {}};
  am.probs.resize(std::size_t{k} * n);
  for (std::uint32_t j = 0; j < n; ++j) {
    double total = 0.0;
    std::vector<double> col(k);
    for (auto& v : col) total += (v = rng.uniform(0.05, 1.0));
    for (std::uint32_t i = 0; i < k; ++i) am.probs[std::size_t{i} * n + j] = static_cast<float>(col[i] / total);
  }
  return am;
}

inline std::vector<float> random_unit(Rng& rng, std::size_t dim) {
  std::vector<float> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = static_cast<float>(rng.uniform(-1.0, 1.0));
    norm += double{x} * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x = static_cast<float>(x / norm);
  return v;
}

// y_c = (sum_ij W_ij x_cij^p / sum_ij W_ij)^(1/p), three explicit loops.
inline std::vector<double> gem_oracle(const FeatureMap& fm, double p, const std::vector<float>& w) {
  std::vector<double> y(fm.channels);
  for (std::uint32_t c = 0; c < fm.channels; ++c) {
    double num = 0.0, den = 0.0;
    for (std::uint32_t i = 0; i < fm.height; ++i) {
      for (std::uint32_t j = 0; j < fm.width; ++j) {
        const double wij = w[std::size_t{i} * fm.width + j];
        num += wij * std::pow(static_cast<double>(fm.at(c, i, j)), p);
        den += wij;
      }
    }
    y[c] = std::pow(num / den, 1.0 / p);
  }
  return y;
}

// V[k*D + d] = sum_j P_kj * s_j * F_dj, with the scale rule of the chosen mode.
inline std::vector<double> cluster_oracle(const LocalFeatures& f, const AssignmentMatrix& p,
                                          const std::vector<float>& attn, double alpha, ClusterMode mode) {
  std::vector<double> v(std::size_t{p.clusters} * f.dim, 0.0);
  for (std::uint32_t k = 0; k < p.clusters; ++k) {
    for (std::uint32_t j = 0; j < f.units; ++j) {
      const double s = mode == ClusterMode::Blended ? 1.0 + alpha * (attn[j] - 1.0) : alpha * attn[j];
      for (std::uint32_t d = 0; d < f.dim; ++d) {
        v[std::size_t{k} * f.dim + d] += p.at(k, j) * s * f.at(d, j);
      }
    }
  }
  return v;
}

inline std::vector<double> normalized(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

// Ranking by (similarity desc, id asc), similarity computed in double and
// rounded the way the contract specifies (clamped, stored as float).
inline std::vector<std::size_t> naive_ranking(const DescriptorDb& db, const std::vector<float>& q, std::size_t n) {
  std::vector<std::pair<float, std::size_t>> scored;
  for (std::size_t i = 0; i < db.size(); ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < db.dim; ++d) s += double{db.rows[i * db.dim + d]} * q[d];
    scored.emplace_back(static_cast<float>(std::clamp(s, -1.0, 1.0)), i);
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return db.ids[a.second] < db.ids[b.second];
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(n, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

inline double superposition_oracle(const std::vector<AttentionPoint>& pts, double x, double y, double sigma) {
  double a = 1.0;
  for (const auto& p : pts) {
    const double d2 = (x - p.x) * (x - p.x) + (y - p.y) * (y - p.y);
    a += (p.weight - 1.0) * std::exp(-d2 / (2.0 * sigma * sigma));
  }
  return std::clamp(a, 0.0, 2.0);
}

inline double haversine_oracle(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kRad = 3.14159265358979323846 / 180.0;
  const double dlat = (lat2 - lat1) * kRad, dlon = (lon2 - lon1) * kRad;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * kRad) * std::cos(lat2 * kRad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * 6371000.0 * std::asin(std::min(1.0, std::sqrt(h)));
}

}  // namespace attnvpr::testing
