#include "attnvpr/geo_eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "attnvpr/error.hpp"
#include "attnvpr/file_util.hpp"

namespace attnvpr {

namespace {

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

std::string alpha_str(double a) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), a);
  std::string s(buf, end);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string pct_str(double v) { return fmt::format("{:.4f}", v); }

nlohmann::ordered_json recall_json(const RecallReport& r) {
  nlohmann::ordered_json j;
  j["query_set"] = r.query_set;
  j["alpha"] = r.alpha;
  nlohmann::ordered_json rec = nlohmann::ordered_json::object();
  for (const auto& [n, pct] : r.recalls) rec[std::to_string(n)] = pct;
  j["recalls"] = rec;
  j["unreachable"] = r.unreachable;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& q : r.per_query) {
    nlohmann::ordered_json e;
    e["query_id"] = q.query_id;
    if (q.first_correct_rank) e["first_correct_rank"] = *q.first_correct_rank;
    else e["first_correct_rank"] = nullptr;
    per.push_back(std::move(e));
  }
  j["per_query"] = std::move(per);
  return j;
}

void append_rows(std::string& out, const RecallReport& r, bool with_set) {
  for (const auto& [n, pct] : r.recalls) {
    if (with_set) out += r.query_set + ',';
    out += alpha_str(r.alpha) + ',' + std::to_string(n) + ',' + pct_str(pct) + '\n';
  }
}

}  // namespace

double haversine(const GeoTag& a, const GeoTag& b, double radius_m) {
  const double phi1 = radians(a.lat);
  const double phi2 = radians(b.lat);
  const double dphi = radians(b.lat - a.lat);
  const double dlambda = radians(b.lon - a.lon);
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * radius_m * std::asin(std::min(1.0, std::sqrt(h)));
}

void EvalConfig::validate() const {
  if (!(threshold_m > 0.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be positive");
  if (ns.empty() || !std::is_sorted(ns.begin(), ns.end()) || ns.front() == 0) {
    throw Error(ErrorCode::InvalidArgument, "recall N list must be non-empty, ascending and >= 1");
  }
}

RecallReport recall_at_n(const std::vector<RankedList>& results, const Manifest& ground_truth,
                         const EvalConfig& cfg, std::string query_set, double alpha) {
  cfg.validate();
  RecallReport report;
  report.query_set = std::move(query_set);
  report.alpha = alpha;
  std::map<std::size_t, std::size_t> hits;
  for (std::size_t n : cfg.ns) hits[n] = 0;

  for (const auto& list : results) {
    const ManifestEntry* gt = ground_truth.find(list.query_id);
    if (!gt) throw Error(ErrorCode::MissingGroundTruth, "query '" + list.query_id + "' has no ground-truth entry");
    QueryOutcome outcome{list.query_id, std::nullopt};
    for (std::size_t r = 0; r < list.hits.size(); ++r) {
      if (haversine(list.hits[r].geotag, gt->geo, cfg.earth_radius_m) <= cfg.threshold_m) {
        outcome.first_correct_rank = r + 1;
        break;
      }
    }
    if (outcome.first_correct_rank) {
      for (auto& [n, count] : hits) {
        if (*outcome.first_correct_rank <= n) ++count;
      }
    } else {
      ++report.unreachable;
    }
    report.per_query.push_back(std::move(outcome));
  }
  const double total = static_cast<double>(results.size());
  for (const auto& [n, count] : hits) report.recalls[n] = total > 0 ? 100.0 * static_cast<double>(count) / total : 0.0;
  return report;
}

std::vector<double> alpha_lattice(double start, double stop, double step) {
  if (!(step > 0.0) || stop < start) throw Error(ErrorCode::InvalidArgument, "alpha lattice needs step > 0, stop >= start");
  const auto steps = static_cast<long>(std::floor((stop - start) / step + 1e-9));
  std::vector<double> out;
  for (long i = 0; i <= steps; ++i) {
    const double a = std::round((start + static_cast<double>(i) * step) * 1e9) / 1e9;
    if (a < 0.0 || a > 1.0) throw Error(ErrorCode::InvalidArgument, "alpha values must lie in [0,1]");
    out.push_back(a);
  }
  return out;
}

SweepReport alpha_sweep(const QuerySet& queries, const SearchIndex& db, const ModelProfile& profile,
                        const SweepOptions& options, std::string query_set) {
  options.eval.validate();
  const std::size_t top_n = options.top_n ? options.top_n : options.eval.ns.back();
  SweepReport sweep;
  sweep.query_set = std::move(query_set);
  for (double alpha : options.alphas) {
    const DescriptorDb qdb = aggregate_query_set(queries, profile, alpha, options.threads);
    const auto results = search_all(db, qdb, top_n, nullptr, options.threads);
    sweep.grid.push_back(recall_at_n(results, queries.manifest, options.eval, sweep.query_set, alpha));
  }
  return sweep;
}

std::string report_csv(const RecallReport& report) {
  std::string out = "alpha,N,recall_pct\n";
  append_rows(out, report, false);
  return out;
}

std::string report_csv(const std::vector<SweepReport>& sweeps) {
  const bool with_set = sweeps.size() > 1;
  std::string out = with_set ? "query_set,alpha,N,recall_pct\n" : "alpha,N,recall_pct\n";
  for (const auto& s : sweeps) {
    for (const auto& r : s.grid) append_rows(out, r, with_set);
  }
  return out;
}

std::string report_json(const RecallReport& report) { return recall_json(report).dump(2) + "\n"; }

std::string report_json(const std::vector<SweepReport>& sweeps) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& s : sweeps) {
    nlohmann::ordered_json j;
    j["query_set"] = s.query_set;
    nlohmann::ordered_json grid = nlohmann::ordered_json::array();
    for (const auto& r : s.grid) grid.push_back(recall_json(r));
    j["grid"] = std::move(grid);
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::string sweep_svg(const std::vector<SweepReport>& sweeps) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 180, kTop = 30, kBottom = 50;
  constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double plot_w = kW - kLeft - kRight;
  const double plot_h = kH - kTop - kBottom;
  auto px = [&](double alpha) { return kLeft + alpha * plot_w; };
  auto py = [&](double pct) { return kTop + (1.0 - pct / 100.0) * plot_h; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kW, kH);
  svg += fmt::format("<text x=\"{}\" y=\"18\" font-size=\"13\">Recall@N vs attention blend alpha</text>\n", kLeft);
  for (int t = 0; t <= 10; ++t) {
    const double a = t / 10.0;
    svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"#ddd\"/>\n", px(a),
                       kTop, kTop + plot_h);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.1f}</text>\n", px(a),
                       kTop + plot_h + 16, a);
  }
  for (int t = 0; t <= 5; ++t) {
    const double pct = t * 20.0;
    svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"#ddd\"/>\n", kLeft,
                       py(pct), kLeft + plot_w);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.0f}</text>\n", kLeft - 6, py(pct) + 4,
                       pct);
  }
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", kLeft,
                     kTop, plot_w, plot_h);
  svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">alpha</text>\n", kLeft + plot_w / 2,
                     kH - 12);
  svg += fmt::format(
      "<text x=\"14\" y=\"{:.1f}\" transform=\"rotate(-90 14 {:.1f})\" text-anchor=\"middle\">Recall (%)</text>\n",
      kTop + plot_h / 2, kTop + plot_h / 2);

  std::size_t series = 0;
  for (const auto& s : sweeps) {
    if (s.grid.empty()) continue;
    for (const auto& [n, unused] : s.grid.front().recalls) {
      const char* color = kPalette[series % std::size(kPalette)];
      std::string points;
      for (const auto& r : s.grid) {
        auto it = r.recalls.find(n);
        if (it == r.recalls.end()) continue;
        points += fmt::format("{:.1f},{:.1f} ", px(r.alpha), py(it->second));
      }
      if (!points.empty()) points.pop_back();
      svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", color, points);
      const double ly = kTop + 12 + 16.0 * static_cast<double>(series);
      svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"{3}\" "
                         "stroke-width=\"2\"/>\n",
                         kLeft + plot_w + 12, ly, kLeft + plot_w + 32, color);
      const std::string label = (s.query_set.empty() ? std::string() : s.query_set + " ") + "R@" + std::to_string(n);
      svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", kLeft + plot_w + 38, ly + 4, label);
      ++series;
    }
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::filesystem::path> emit_report(const std::vector<SweepReport>& sweeps,
                                               const std::vector<ReportFormat>& formats,
                                               const std::filesystem::path& out_dir, const std::string& stem,
                                               std::vector<std::string>* warnings) {
  if (warnings) {
    for (const auto& s : sweeps) {
      if (s.grid.empty() || s.grid.front().per_query.empty()) {
        warnings->push_back("query set '" + s.query_set + "' has 0 queries");
      }
    }
  }
  std::vector<std::filesystem::path> written;
  for (ReportFormat f : formats) {
    std::filesystem::path path = out_dir / stem;
    switch (f) {
      case ReportFormat::Csv:
        path += ".csv";
        atomic_write(path, report_csv(sweeps));
        break;
      case ReportFormat::Json:
        path += ".json";
        atomic_write(path, report_json(sweeps));
        break;
      case ReportFormat::Plot:
        path += ".svg";
        atomic_write(path, sweep_svg(sweeps));
        break;
    }
    written.push_back(path);
  }
  return written;
}

std::vector<std::filesystem::path> emit_report(const RecallReport& report, const std::vector<ReportFormat>& formats,
                                               const std::filesystem::path& out_dir, const std::string& stem,
                                               std::vector<std::string>* warnings) {
  if (warnings && report.per_query.empty()) {
    warnings->push_back("report '" + report.query_set + "' has 0 queries");
  }
  std::vector<std::filesystem::path> written;
  for (ReportFormat f : formats) {
    std::filesystem::path path = out_dir / stem;
    switch (f) {
      case ReportFormat::Csv:
        path += ".csv";
        atomic_write(path, report_csv(report));
        break;
      case ReportFormat::Json:
        path += ".json";
        atomic_write(path, report_json(report));
        break;
      case ReportFormat::Plot:
        path += ".svg";
        atomic_write(path, sweep_svg({SweepReport{report.query_set, {report}}}));
        break;
    }
    written.push_back(path);
  }
  return written;
}

std::vector<RecallRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedRow, "empty report CSV");
  const bool with_set = line == "query_set,alpha,N,recall_pct";
  if (!with_set && line != "alpha,N,recall_pct") throw Error(ErrorCode::MalformedRow, "unexpected CSV header");
  std::vector<RecallRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != (with_set ? 4u : 3u)) throw Error(ErrorCode::MalformedRow, "bad report row '" + line + "'");
    RecallRow row;
    std::size_t i = 0;
    if (with_set) row.query_set = f[i++];
    try {
      row.alpha = std::stod(f[i++]);
      row.n = std::stoul(f[i++]);
      row.recall_pct = std::stod(f[i++]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedRow, "bad report row '" + line + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string results_jsonl(const std::vector<RankedList>& results) {
  std::string out;
  for (const auto& list : results) {
    nlohmann::ordered_json j;
    j["query_id"] = list.query_id;
    nlohmann::ordered_json hits = nlohmann::ordered_json::array();
    for (const auto& h : list.hits) {
      nlohmann::ordered_json e;
      e["db_id"] = h.db_id;
      e["similarity"] = h.similarity;
      e["lat"] = h.geotag.lat;
      e["lon"] = h.geotag.lon;
      hits.push_back(std::move(e));
    }
    j["hits"] = std::move(hits);
    out += j.dump() + '\n';
  }
  return out;
}

std::vector<RankedList> parse_results_jsonl(const std::string& text) {
  std::vector<RankedList> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("query_id") || !j.contains("hits")) {
      throw Error(ErrorCode::MalformedRow, "results line " + std::to_string(line_no) + " is not a result object");
    }
    RankedList list;
    try {
      list.query_id = j.at("query_id").get<std::string>();
      for (const auto& h : j.at("hits")) {
        Hit hit;
        hit.db_id = h.at("db_id").get<std::string>();
        hit.similarity = h.at("similarity").get<float>();
        hit.geotag = {h.at("lat").get<double>(), h.at("lon").get<double>()};
        hit.db_index = static_cast<std::size_t>(-1);
        list.hits.push_back(std::move(hit));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRow, "results line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(list));
  }
  return out;
}

}  // namespace attnvpr
