#include <gtest/gtest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "../support/oracles.hpp"
#include "attnvpr/error.hpp"
#include "attnvpr/file_util.hpp"
#include "attnvpr/geo_eval.hpp"

using namespace attnvpr;
using attnvpr::testing::Rng;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an attnvpr::Error";
  return ErrorCode::InvalidArgument;
}

constexpr double kMetersPerDegLat = 6371000.0 * 3.14159265358979323846 / 180.0;

// Geotag `meters` north of `g`.
GeoTag north(GeoTag g, double meters) { return {g.lat + meters / kMetersPerDegLat, g.lon}; }

RankedList ranked(const std::string& qid, const std::vector<GeoTag>& hits) {
  RankedList r{qid, {}};
  for (std::size_t i = 0; i < hits.size(); ++i) {
    r.hits.push_back({"d" + std::to_string(i), static_cast<float>(1.0 - 0.01 * i), hits[i], i});
  }
  return r;
}

// Ten queries whose first correct hit sits at ranks 1,1,1,1,1,1,3,5,8,(none in 10).
struct Planted {
  std::vector<RankedList> results;
  Manifest gt;
};

Planted planted() {
  const std::size_t ranks[] = {1, 1, 1, 1, 1, 1, 3, 5, 8, 12};
  const GeoTag origin{37.7749, -122.4194};
  Planted p;
  for (std::size_t q = 0; q < 10; ++q) {
    const GeoTag truth = north(origin, 500.0 * q);
    std::vector<GeoTag> hits;
    for (std::size_t r = 1; r <= 10; ++r) hits.push_back(north(truth, r == ranks[q] ? 10.0 : 200.0 + r));
    p.results.push_back(ranked("q" + std::to_string(q), hits));
    p.gt.add({"q" + std::to_string(q), "", truth});
  }
  return p;
}

}  // namespace

TEST(Haversine, Examples) {
  const GeoTag a{37.7749, -122.4194};
  EXPECT_EQ(haversine(a, a), 0.0);
  EXPECT_NEAR(haversine({0, 0}, {0, 0.001}), 111.195, 0.01);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const GeoTag x{rng.uniform(-89, 89), rng.uniform(-180, 180)}, y{rng.uniform(-89, 89), rng.uniform(-180, 180)};
    EXPECT_EQ(haversine(x, y), haversine(y, x));
    EXPECT_NEAR(haversine(x, y), attnvpr::testing::haversine_oracle(x.lat, x.lon, y.lat, y.lon), 1e-6);
  }
}

TEST(Recall, SingleQuerySuccessAndExclusion) {
  const GeoTag truth{37.7749, -122.4194};
  Manifest gt;
  gt.add({"q", "", truth});
  const auto ok = recall_at_n({ranked("q", {north(truth, 10.0)})}, gt, EvalConfig{25.0});
  for (std::size_t n : {1, 5, 10}) EXPECT_DOUBLE_EQ(ok.recalls.at(n), 100.0);
  const auto miss = recall_at_n({ranked("q", {north(truth, 30.0)})}, gt, EvalConfig{25.0});
  for (std::size_t n : {1, 5, 10}) EXPECT_DOUBLE_EQ(miss.recalls.at(n), 0.0);
  EXPECT_EQ(miss.unreachable, 1u);
}

TEST(Recall, PlantedSixtyEightyNinety) {
  const Planted p = planted();
  const auto r = recall_at_n(p.results, p.gt, EvalConfig{25.0});
  EXPECT_DOUBLE_EQ(r.recalls.at(1), 60.0);
  EXPECT_DOUBLE_EQ(r.recalls.at(5), 80.0);
  EXPECT_DOUBLE_EQ(r.recalls.at(10), 90.0);
  EXPECT_EQ(r.unreachable, 1u);
  EXPECT_EQ(*r.per_query[6].first_correct_rank, 3u);
  EXPECT_FALSE(r.per_query[9].first_correct_rank.has_value());
}

TEST(Recall, MissingGroundTruth) {
  Manifest gt;
  gt.add({"other", "", {0, 0}});
  EXPECT_EQ(code_of([&] { recall_at_n({ranked("q", {{0, 0}})}, gt, EvalConfig{}); }),
            ErrorCode::MissingGroundTruth);
}

TEST(AlphaLattice, ElevenExactValues) {
  const auto a = alpha_lattice();
  ASSERT_EQ(a.size(), 11u);
  EXPECT_EQ(a.front(), 0.0);
  EXPECT_EQ(a[3], 0.3);
  EXPECT_EQ(a[7], 0.7);
  EXPECT_EQ(a.back(), 1.0);
}

TEST(Report, CsvCardinalityAndRoundTrip) {
  SweepReport s{"queries", {}};
  for (double a : alpha_lattice()) {
    RecallReport r;
    r.query_set = "queries";
    r.alpha = a;
    r.recalls = {{1, 100.0 / 3}, {5, 50.0 + a}, {10, 90.0}};
    s.grid.push_back(r);
  }
  const std::string csv = report_csv({s});
  const auto rows = parse_report_csv(csv);
  EXPECT_EQ(rows.size(), 33u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "alpha,N,recall_pct");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& src = s.grid[i / 3];
    EXPECT_EQ(rows[i].alpha, src.alpha);
    EXPECT_NEAR(rows[i].recall_pct, src.recalls.at(rows[i].n), 1e-4);
  }

  SweepReport other = s;
  other.query_set = "flood";
  const std::string multi = report_csv({s, other});
  EXPECT_EQ(multi.substr(0, multi.find('\n')), "query_set,alpha,N,recall_pct");
  EXPECT_EQ(parse_report_csv(multi).size(), 66u);
}

TEST(Report, EmptyReportWarnsAndJsonMirrors) {
  attnvpr::testing::TempDir dir("report");
  RecallReport empty;
  empty.query_set = "none";
  empty.recalls = {{1, 0.0}};
  std::vector<std::string> warnings;
  const auto files = emit_report(empty, {ReportFormat::Csv, ReportFormat::Json, ReportFormat::Plot}, dir.path(),
                                 "r", &warnings);
  EXPECT_EQ(files.size(), 3u);
  EXPECT_EQ(warnings.size(), 1u);
  for (const auto& f : files) EXPECT_TRUE(fs::exists(f));

  const Planted p = planted();
  const auto r = recall_at_n(p.results, p.gt, EvalConfig{25.0}, "planted", 0.5);
  const auto j = nlohmann::json::parse(report_json(r));
  EXPECT_EQ(j["query_set"], "planted");
  EXPECT_EQ(j["alpha"], 0.5);
  EXPECT_EQ(j["unreachable"], 1);
  EXPECT_EQ(j["per_query"].size(), 10u);
}

TEST(Report, SvgHasOneLinePerSetAndN) {
  SweepReport s{"queries", {}};
  for (double a : alpha_lattice()) s.grid.push_back(RecallReport{"queries", a, {{1, 10 * a}, {5, 50.0}}, {}, 0});
  const std::string svg = sweep_svg({s});
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  std::size_t lines = 0;
  for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++lines;
  EXPECT_EQ(lines, 2u);
}

TEST(ResultsJsonl, RoundTrip) {
  const Planted p = planted();
  const auto back = parse_results_jsonl(results_jsonl(p.results));
  ASSERT_EQ(back.size(), p.results.size());
  EXPECT_EQ(back[3].hits[2].db_id, p.results[3].hits[2].db_id);
  EXPECT_EQ(back[3].hits[2].similarity, p.results[3].hits[2].similarity);
  EXPECT_EQ(back[3].hits[2].geotag.lat, p.results[3].hits[2].geotag.lat);
  EXPECT_EQ(results_jsonl(back), results_jsonl(p.results));
}

// Property: recall is nondecreasing in N and in the threshold on random outcomes.
TEST(Recall, PropertyMonotoneInNAndThreshold) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    Manifest gt;
    std::vector<RankedList> results;
    const std::size_t nq = rng.range(1, 30);
    for (std::size_t q = 0; q < nq; ++q) {
      const GeoTag truth{rng.uniform(-60, 60), rng.uniform(-170, 170)};
      std::vector<GeoTag> hits;
      for (int h = 0; h < 20; ++h) hits.push_back(north(truth, rng.uniform(0.0, 200.0)));
      results.push_back(ranked("q" + std::to_string(q), hits));
      gt.add({"q" + std::to_string(q), "", truth});
    }
    EvalConfig cfg{0.0, {1, 2, 5, 10, 20}};
    std::map<std::size_t, double> prev;
    for (double thr : {5.0, 10.0, 25.0, 50.0, 100.0}) {
      cfg.threshold_m = thr;
      const auto r = recall_at_n(results, gt, cfg);
      double last = -1.0;
      for (const auto& [n, pct] : r.recalls) {
        EXPECT_GE(pct, last);
        last = pct;
        if (prev.count(n)) EXPECT_GE(pct, prev[n]);
        prev[n] = pct;
      }
    }
  }
}
