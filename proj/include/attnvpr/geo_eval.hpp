#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attnvpr/pipeline.hpp"
#include "attnvpr/retrieval.hpp"
#include "attnvpr/tensor_io.hpp"

namespace attnvpr {

inline constexpr double kEarthRadiusM = 6'371'000.0;

/// Great-circle distance in meters on a spherical earth.
double haversine(const GeoTag& a, const GeoTag& b, double radius_m = kEarthRadiusM);

struct EvalConfig {
  /// 25 m for benchmark-style query sets, 100 m for social-media flood sets.
  double threshold_m = 25.0;
  std::vector<std::size_t> ns{1, 5, 10};
  double earth_radius_m = kEarthRadiusM;

  void validate() const;
};

struct QueryOutcome {
  std::string query_id;
  /// 1-based rank of the first hit within threshold, if any.
  std::optional<std::size_t> first_correct_rank;
};

struct RecallReport {
  std::string query_set;
  double alpha = 0.0;
  /// N -> percentage of queries recalled within the top N.
  std::map<std::size_t, double> recalls;
  std::vector<QueryOutcome> per_query;
  /// Queries whose retrieved list holds no hit inside the threshold at all.
  std::size_t unreachable = 0;
};

RecallReport recall_at_n(const std::vector<RankedList>& results, const Manifest& ground_truth,
                         const EvalConfig& cfg, std::string query_set = {}, double alpha = 0.0);

struct SweepReport {
  std::string query_set;
  std::vector<RecallReport> grid;
};

/// alpha in {0.0, 0.1, ..., 1.0}, built by integer steps so every entry is exact.
std::vector<double> alpha_lattice(double start = 0.0, double stop = 1.0, double step = 0.1);

struct SweepOptions {
  std::vector<double> alphas = alpha_lattice();
  EvalConfig eval;
  std::size_t top_n = 0;  // 0: max of eval.ns
  unsigned threads = 1;
};

/// For each alpha: aggregate the queries with that blend, search the fixed
/// database, evaluate. The database is never re-aggregated.
SweepReport alpha_sweep(const QuerySet& queries, const SearchIndex& db, const ModelProfile& profile,
                        const SweepOptions& options, std::string query_set = {});

std::string report_csv(const RecallReport& report);
std::string report_csv(const std::vector<SweepReport>& sweeps);
std::string report_json(const RecallReport& report);
std::string report_json(const std::vector<SweepReport>& sweeps);
/// Recall-vs-alpha line chart, one line per (query set, N), as SVG.
std::string sweep_svg(const std::vector<SweepReport>& sweeps);

enum class ReportFormat { Csv, Json, Plot };

/// Writes `<stem>.csv`, `<stem>.json` and/or `<stem>.svg` under `out_dir`.
/// Returns the written paths and appends a warning for zero-query reports.
std::vector<std::filesystem::path> emit_report(const std::vector<SweepReport>& sweeps,
                                               const std::vector<ReportFormat>& formats,
                                               const std::filesystem::path& out_dir, const std::string& stem,
                                               std::vector<std::string>* warnings = nullptr);
std::vector<std::filesystem::path> emit_report(const RecallReport& report, const std::vector<ReportFormat>& formats,
                                               const std::filesystem::path& out_dir, const std::string& stem,
                                               std::vector<std::string>* warnings = nullptr);

/// One parsed `alpha,N,recall_pct` row; the query_set column is optional.
struct RecallRow {
  std::string query_set;
  double alpha = 0.0;
  std::size_t n = 0;
  double recall_pct = 0.0;
};
std::vector<RecallRow> parse_report_csv(const std::string& text);

/// JSON-lines serialization of retrieval results: {query_id, hits:[{db_id, similarity, lat, lon}]}.
std::string results_jsonl(const std::vector<RankedList>& results);
std::vector<RankedList> parse_results_jsonl(const std::string& text);

}  // namespace attnvpr
