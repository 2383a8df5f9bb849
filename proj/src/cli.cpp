#include "attnvpr/cli.hpp"

#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "attnvpr/error.hpp"
#include "attnvpr/file_util.hpp"
#include "attnvpr/fixture.hpp"
#include "attnvpr/pipeline.hpp"

namespace attnvpr::cli {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::InvalidArgument, what + ": '" + s + "' is not a number");
}

void print_warnings(const Warnings& warnings, const GlobalOptions& g, std::ostream& log) {
  if (!g.verbose) return;
  for (const auto& w : warnings) log << "warning: " << w << "\n";
}

fs::path default_manifest(const fs::path& features) {
  if (fs::exists(features / "manifest.csv")) return features / "manifest.csv";
  return features.parent_path() / "manifest.csv";
}

void export_contributions(const QuerySet& set, const ModelProfile& profile, double alpha, const fs::path& dir) {
  if (profile.aggregator != AggregatorKind::Gem) {
    throw Error(ErrorCode::InvalidArgument, "contribution maps are defined for GeM profiles only");
  }
  for (std::size_t i = 0; i < set.features.size(); ++i) {
    const FeatureMap& fm = *set.features[i].fmap;
    const AttentionMap* attn = set.attention[i] ? &*set.attention[i] : nullptr;
    const WeightMap native = effective_weights(fm, profile, nullptr, 0.0);
    const WeightMap blended = effective_weights(fm, profile, attn, alpha);
    nlohmann::ordered_json j;
    j["id"] = set.features[i].id;
    j["alpha"] = alpha;
    j["height"] = fm.height;
    j["width"] = fm.width;
    j["native"] = contribution_map(fm, native, profile.gem);
    j["attention"] = attn ? resample_attention(*attn, fm.height, fm.width).values
                          : AttentionMap::uniform(fm.height, fm.width).values;
    j["blended"] = contribution_map(fm, blended, profile.gem);
    atomic_write(dir / (set.features[i].id + ".contrib.json"), j.dump() + "\n");
  }
}

}  // namespace

QeConfig parse_qe(const std::string& spec) {
  QeConfig qe;
  for (const auto& part : split(spec, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--qe expects k=K,alpha=A");
    const std::string key = part.substr(0, eq);
    const std::string value = part.substr(eq + 1);
    if (key == "k") {
      const double k = to_double(value, "--qe k");
      if (k < 1 || k != static_cast<double>(static_cast<std::size_t>(k))) {
        throw Error(ErrorCode::InvalidArgument, "--qe k must be a positive integer");
      }
      qe.k = static_cast<std::size_t>(k);
    } else if (key == "alpha") {
      qe.alpha_qe = to_double(value, "--qe alpha");
      if (!(qe.alpha_qe >= 0.0 && qe.alpha_qe <= 1.0)) throw Error(ErrorCode::InvalidArgument, "--qe alpha must be in [0,1]");
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown --qe key '" + key + "'");
    }
  }
  return qe;
}

std::vector<double> parse_alphas(const std::string& spec) {
  if (spec.find(':') != std::string::npos) {
    const auto parts = split(spec, ':');
    if (parts.size() != 3) throw Error(ErrorCode::InvalidArgument, "--alphas expects start:stop:step");
    return alpha_lattice(to_double(parts[0], "alpha start"), to_double(parts[1], "alpha stop"),
                         to_double(parts[2], "alpha step"));
  }
  std::vector<double> out;
  for (const auto& p : split(spec, ',')) {
    const double a = to_double(p, "alpha");
    if (!(a >= 0.0 && a <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha values must lie in [0,1]");
    out.push_back(a);
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "--alphas is empty");
  return out;
}

std::vector<std::size_t> parse_recall_ns(const std::string& spec) {
  std::vector<std::size_t> out;
  for (const auto& p : split(spec, ',')) {
    const double n = to_double(p, "recall N");
    if (n < 1 || n != static_cast<double>(static_cast<std::size_t>(n))) {
      throw Error(ErrorCode::InvalidArgument, "recall N must be a positive integer");
    }
    out.push_back(static_cast<std::size_t>(n));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "--recall is empty");
  return out;
}

void run_attn_gen(const AttnGenOptions& o, const GlobalOptions& g, std::ostream& log) {
  ProviderConfig cfg = parse_provider(o.provider, o.model);
  cfg.max_concurrent = o.max_concurrent;
  if (auto* http = std::get_if<HttpProvider>(&cfg.kind)) {
    http->max_retries = o.max_retries;
    http->api_key_env = o.api_key_env;
    http->timeout_s = o.timeout_s;
  }
  cfg.validate();
  const Manifest manifest = load_manifest(o.manifest);
  std::vector<AttentionRequest> requests;
  for (const auto& e : manifest.entries()) {
    requests.push_back({e.id, e.path.empty() ? std::nullopt : std::optional(o.manifest.parent_path() / e.path)});
  }
  const auto results = request_attention_batch(requests, o.city, cfg, RequestOptions{o.out, o.reuse_cache});
  std::size_t landmarks = 0, points = 0, retries = 0;
  for (const auto& r : results) {
    if (r.spec.is_single_landmark()) ++landmarks;
    else points += r.spec.points().size();
    retries += r.retries;
    print_warnings(r.warnings, g, log);
  }
  log << fmt::format("attn-gen: {} images ({} single-landmark, {} attention points, {} retries) -> {}\n",
                     results.size(), landmarks, points, retries, o.out.string());
}

void run_aggregate(const AggregateOptions& o, const GlobalOptions& g, std::ostream& log) {
  const ModelProfile profile = load_profile(o.profile);
  const Manifest manifest = load_manifest(o.manifest);
  Warnings warnings;
  const QuerySet set = load_query_set(o.features, manifest, profile, o.attention, g.threads, &warnings);
  print_warnings(warnings, g, log);
  const double alpha = o.attention ? o.alpha : 0.0;
  const DescriptorDb db = aggregate_query_set(set, profile, alpha, g.threads);
  if (o.contrib_dir) export_contributions(set, profile, alpha, *o.contrib_dir);
  write_db(db, o.out);
  log << fmt::format("aggregate: {} descriptors of dim {} ({}) -> {}\n", db.size(), db.dim,
                     o.attention ? fmt::format("attention alpha={}", alpha) : std::string("native"), o.out.string());
}

void run_retrieve(const RetrieveOptions& o, const GlobalOptions& g, std::ostream& log) {
  const SearchIndex index = build_index(read_db(o.db));
  const DescriptorDb queries = read_db(o.queries);
  const auto results = search_all(index, queries, o.top_n, o.qe ? &*o.qe : nullptr, g.threads);
  atomic_write(o.out, results_jsonl(results));
  log << fmt::format("retrieve: {} queries against {} db rows (top {}{}) -> {}\n", queries.size(), index.size(),
                     o.top_n, o.qe ? fmt::format(", QE k={} alpha={}", o.qe->k, o.qe->alpha_qe) : std::string(),
                     o.out.string());
}

RecallReport run_evaluate(const EvaluateOptions& o, const GlobalOptions&, std::ostream& log) {
  o.eval.validate();
  const auto results = parse_results_jsonl(read_file(o.results));
  const Manifest gt = load_manifest(o.manifest);
  const RecallReport report = recall_at_n(results, gt, o.eval, o.manifest.parent_path().filename().string());
  Warnings warnings;
  const auto csv = report_csv(report);
  if (report.per_query.empty()) log << "warning: report has 0 queries\n";
  auto json_path = o.out;
  json_path.replace_extension(".json");
  atomic_write(json_path, report_json(report));
  atomic_write(o.out, csv);
  for (const auto& [n, pct] : report.recalls) log << fmt::format("Recall@{}: {:.2f}%\n", n, pct);
  return report;
}

SweepReport run_sweep(const SweepCmdOptions& o, const GlobalOptions& g, std::ostream& log) {
  o.eval.validate();
  const ModelProfile profile = load_profile(o.profile);
  const fs::path manifest_path = o.manifest.empty() ? default_manifest(o.features) : o.manifest;
  const Manifest manifest = load_manifest(manifest_path);
  const SearchIndex index = build_index(read_db(o.db));
  Warnings warnings;
  const QuerySet set = load_query_set(o.features, manifest, profile, o.attention, g.threads, &warnings);
  print_warnings(warnings, g, log);

  SweepOptions options;
  options.alphas = o.alphas;
  options.eval = o.eval;
  options.threads = g.threads;
  const std::string name = o.query_set.empty() ? manifest_path.parent_path().filename().string() : o.query_set;
  SweepReport sweep = alpha_sweep(set, index, profile, options, name);

  Warnings report_warnings;
  emit_report({sweep}, {ReportFormat::Csv, ReportFormat::Json, ReportFormat::Plot}, o.out, "sweep", &report_warnings);
  for (const auto& w : report_warnings) log << "warning: " << w << "\n";
  for (const auto& r : sweep.grid) {
    std::string line = fmt::format("sweep {} alpha={:.2f}:", name, r.alpha);
    for (const auto& [n, pct] : r.recalls) line += fmt::format(" R@{}={:.1f}", n, pct);
    log << line << "\n";
  }
  return sweep;
}

void run_demo(const DemoOptions& o, const GlobalOptions& g, std::ostream& log) {
  const FixtureLayout fx = gen_fixture({g.seed, o.n_db, o.n_queries}, o.out / "fixture");
  log << "demo: fixture written to " << fx.root.string() << "\n";
  if (o.fixture_only) return;

  for (const std::string set : {"queries", "flood"}) {
    AttnGenOptions attn;
    attn.manifest = fx.manifest(set);
    attn.city = "San Francisco";
    attn.provider = "fixture:" + fx.attention(set).string();
    attn.out = o.out / "attention" / set;
    run_attn_gen(attn, g, log);
  }

  AggregateOptions db;
  db.features = fx.features("db");
  db.manifest = fx.manifest("db");
  db.profile = fx.profile();
  db.out = o.out / "db.vdb";
  run_aggregate(db, g, log);

  AggregateOptions queries = db;
  queries.features = fx.features("queries");
  queries.manifest = fx.manifest("queries");
  queries.out = o.out / "queries.vdb";
  run_aggregate(queries, g, log);

  run_retrieve({o.out / "db.vdb", o.out / "queries.vdb", 10, std::nullopt, o.out / "results.jsonl"}, g, log);
  run_evaluate({o.out / "results.jsonl", fx.manifest("queries"), EvalConfig{25.0}, o.out / "report.csv"}, g, log);

  std::vector<SweepReport> sweeps;
  for (const std::string set : {"queries", "flood"}) {
    SweepCmdOptions s;
    s.features = fx.features(set);
    s.attention = o.out / "attention" / set;
    s.db = o.out / "db.vdb";
    s.profile = fx.profile();
    s.manifest = fx.manifest(set);
    s.query_set = set;
    s.eval = EvalConfig{25.0};
    s.out = o.out / "sweep" / set;
    sweeps.push_back(run_sweep(s, g, log));
  }
  emit_report(sweeps, {ReportFormat::Csv, ReportFormat::Json, ReportFormat::Plot}, o.out / "sweep", "sweep");
  log << "demo: sweep report written to " << (o.out / "sweep").string() << "\n";
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"attnvpr: LLM-guided attention for visual place recognition descriptors", "attnvpr"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--threads", g.threads, "Worker threads (affects wall time only)")->check(CLI::Range(1u, 1024u));
  app.add_option("--seed", g.seed, "Seed for synthetic fixtures");
  app.add_flag("--verbose", g.verbose, "Print warnings");

  AttnGenOptions attn;
  auto* attn_cmd = app.add_subcommand("attn-gen", "Request LLM attention points for each query image");
  attn_cmd->add_option("--manifest", attn.manifest, "Query manifest CSV")->required();
  attn_cmd->add_option("--city", attn.city, "City named in the prompt")->required();
  attn_cmd->add_option("--provider", attn.provider, "fixture:DIR or http:URL")->required();
  attn_cmd->add_option("--model", attn.model, "Model name sent to the HTTP endpoint");
  attn_cmd->add_option("--out", attn.out, "Directory for <id>.attn.json responses")->required();
  attn_cmd->add_option("--max-concurrent", attn.max_concurrent, "In-flight request cap")->check(CLI::Range(1u, 256u));
  attn_cmd->add_option("--max-retries", attn.max_retries, "Retries per image")->check(CLI::Range(0u, 5u));
  attn_cmd->add_option("--api-key-env", attn.api_key_env, "Environment variable holding the API key");
  attn_cmd->add_option("--timeout", attn.timeout_s, "HTTP timeout in seconds")->check(CLI::PositiveNumber);
  attn_cmd->add_flag("--reuse-cache", attn.reuse_cache, "Skip images whose cached response parses");

  AggregateOptions agg;
  std::string agg_attention, agg_contrib;
  auto* agg_cmd = app.add_subcommand("aggregate", "Build global descriptors from feature maps");
  agg_cmd->add_option("--features", agg.features, "Feature directory")->required();
  agg_cmd->add_option("--manifest", agg.manifest, "Manifest CSV")->required();
  agg_cmd->add_option("--attention", agg_attention, "Attention directory (query side only)");
  agg_cmd->add_option("--alpha", agg.alpha, "Attention blend in [0,1]")->check(CLI::Range(0.0, 1.0));
  agg_cmd->add_option("--profile", agg.profile, "Model profile")->required();
  agg_cmd->add_option("--out", agg.out, "Output .vdb")->required();
  agg_cmd->add_option("--contrib", agg_contrib, "Directory for per-query contribution maps");

  RetrieveOptions ret;
  std::string qe_spec;
  auto* ret_cmd = app.add_subcommand("retrieve", "Exact cosine top-N search");
  ret_cmd->add_option("--db", ret.db, "Database .vdb")->required();
  ret_cmd->add_option("--queries", ret.queries, "Query .vdb")->required();
  ret_cmd->add_option("--topn", ret.top_n, "Hits per query")->check(CLI::PositiveNumber);
  ret_cmd->add_option("--qe", qe_spec, "Average query expansion, e.g. k=5,alpha=0.8");
  ret_cmd->add_option("--out", ret.out, "Output results.jsonl")->required();

  EvaluateOptions ev;
  std::string ev_recall = "1,5,10";
  auto* ev_cmd = app.add_subcommand("evaluate", "Recall@N against geotagged ground truth");
  ev_cmd->add_option("--results", ev.results, "results.jsonl")->required();
  ev_cmd->add_option("--manifest", ev.manifest, "Query manifest with ground-truth coordinates")->required();
  ev_cmd->add_option("--threshold-m", ev.eval.threshold_m, "Distance threshold in meters")->check(CLI::PositiveNumber);
  ev_cmd->add_option("--recall", ev_recall, "Comma-separated N values");
  ev_cmd->add_option("--out", ev.out, "Output CSV")->required();

  SweepCmdOptions sw;
  std::string sw_alphas = "0:1:0.1", sw_recall = "1,5,10";
  auto* sw_cmd = app.add_subcommand("sweep", "Recall@N over a grid of attention blends");
  sw_cmd->add_option("--features", sw.features, "Query feature directory")->required();
  sw_cmd->add_option("--attention", sw.attention, "Query attention directory")->required();
  sw_cmd->add_option("--db", sw.db, "Database .vdb")->required();
  sw_cmd->add_option("--profile", sw.profile, "Model profile")->required();
  sw_cmd->add_option("--manifest", sw.manifest, "Query manifest (default: next to the features)");
  sw_cmd->add_option("--query-set", sw.query_set, "Name used in reports");
  sw_cmd->add_option("--alphas", sw_alphas, "start:stop:step or comma list");
  sw_cmd->add_option("--threshold-m", sw.eval.threshold_m, "Distance threshold in meters")->check(CLI::PositiveNumber);
  sw_cmd->add_option("--recall", sw_recall, "Comma-separated N values");
  sw_cmd->add_option("--out", sw.out, "Output directory")->required();

  DemoOptions demo;
  auto* demo_cmd = app.add_subcommand("demo", "Run the whole pipeline on a generated fixture");
  demo_cmd->add_option("--out", demo.out, "Output directory")->required();
  demo_cmd->add_option("--n-db", demo.n_db, "Database images")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--n-queries", demo.n_queries, "Queries per set")->check(CLI::PositiveNumber);

  demo_cmd->add_flag("--fixture-only", demo.fixture_only, "Only write the synthetic fixture dataset");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n";
    auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kUsage;
  }

  try {
    // Derived flags are validated here, before any file is touched.
    if (!agg_attention.empty()) agg.attention = agg_attention;
    if (!agg_contrib.empty()) agg.contrib_dir = agg_contrib;
    if (!qe_spec.empty()) ret.qe = parse_qe(qe_spec);
    ev.eval.ns = parse_recall_ns(ev_recall);
    sw.alphas = parse_alphas(sw_alphas);
    sw.eval.ns = parse_recall_ns(sw_recall);
  } catch (const Error& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (attn_cmd->parsed()) run_attn_gen(attn, g, out);
    else if (agg_cmd->parsed()) run_aggregate(agg, g, out);
    else if (ret_cmd->parsed()) run_retrieve(ret, g, out);
    else if (ev_cmd->parsed()) run_evaluate(ev, g, out);
    else if (sw_cmd->parsed()) run_sweep(sw, g, out);
    else if (demo_cmd->parsed()) run_demo(demo, g, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << error_name(ErrorCode::IoFailure) << ": " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace attnvpr::cli
