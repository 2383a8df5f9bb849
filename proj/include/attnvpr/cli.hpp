#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "attnvpr/geo_eval.hpp"
#include "attnvpr/llm_client.hpp"
#include "attnvpr/retrieval.hpp"

namespace attnvpr::cli {

namespace fs = std::filesystem;

/// Exit statuses of the `attnvpr` binary.
enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2 };

struct GlobalOptions {
  unsigned threads = 1;
  std::uint64_t seed = 7;
  bool verbose = false;
};

struct AttnGenOptions {
  fs::path manifest;
  std::string city;
  std::string provider;
  std::string model = "gemini-2.5-flash";
  fs::path out;
  unsigned max_concurrent = 4;
  unsigned max_retries = 3;
  std::string api_key_env = "ATTNVPR_API_KEY";
  double timeout_s = 60.0;
  bool reuse_cache = false;
};

struct AggregateOptions {
  fs::path features;
  fs::path manifest;
  std::optional<fs::path> attention;
  double alpha = 0.5;
  fs::path profile;
  fs::path out;
  std::optional<fs::path> contrib_dir;
};

struct RetrieveOptions {
  fs::path db;
  fs::path queries;
  std::size_t top_n = 10;
  std::optional<QeConfig> qe;
  fs::path out;
};

struct EvaluateOptions {
  fs::path results;
  fs::path manifest;
  EvalConfig eval;
  fs::path out;
};

struct SweepCmdOptions {
  fs::path features;
  fs::path attention;
  fs::path db;
  fs::path profile;
  fs::path manifest;
  std::string query_set;
  std::vector<double> alphas = alpha_lattice();
  EvalConfig eval{100.0};
  fs::path out;
};

struct DemoOptions {
  fs::path out;
  std::size_t n_db = 40;
  std::size_t n_queries = 10;
  bool fixture_only = false;
};

/// `k=5,alpha=0.8` (either key optional).
QeConfig parse_qe(const std::string& spec);
/// `start:stop:step` or a comma list.
std::vector<double> parse_alphas(const std::string& spec);
std::vector<std::size_t> parse_recall_ns(const std::string& spec);

void run_attn_gen(const AttnGenOptions& o, const GlobalOptions& g, std::ostream& log);
void run_aggregate(const AggregateOptions& o, const GlobalOptions& g, std::ostream& log);
void run_retrieve(const RetrieveOptions& o, const GlobalOptions& g, std::ostream& log);
RecallReport run_evaluate(const EvaluateOptions& o, const GlobalOptions& g, std::ostream& log);
SweepReport run_sweep(const SweepCmdOptions& o, const GlobalOptions& g, std::ostream& log);
void run_demo(const DemoOptions& o, const GlobalOptions& g, std::ostream& log);

/// Parses argv and runs the subcommand: 0 on success, 1 on usage errors (help
/// text printed), 2 on data errors (error name printed).
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace attnvpr::cli
