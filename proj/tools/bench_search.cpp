// Exact-search latency benchmark on random unit vectors.
//
//   attnvpr_bench_search --rows 2810000 --dim 512 --queries 100 --threads 8
//
// The full 2.81M x 512 database needs ~5.8 GB of RAM for the float rows alone;
// the default is a smaller stand-in. Every timed query is checked against a
// naive scan with the same (similarity desc, id asc) ordering.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "attnvpr/parallel.hpp"
#include "attnvpr/retrieval.hpp"

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double signed_unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-52 - 1.0; }

 private:
  std::mt19937_64 engine_;
};

void fill_unit(Rng& rng, float* out, std::size_t dim) {
  double norm = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    out[d] = static_cast<float>(rng.signed_unit());
    norm += double{out[d]} * out[d];
  }
  const double inv = 1.0 / std::sqrt(norm);
  for (std::size_t d = 0; d < dim; ++d) out[d] = static_cast<float>(out[d] * inv);
}

std::vector<std::size_t> naive_top(const attnvpr::DescriptorDb& db, std::span<const float> q, std::size_t n) {
  std::vector<std::pair<float, std::size_t>> scored(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    double s = 0.0;
    const auto row = db.row(i);
    for (std::size_t d = 0; d < db.dim; ++d) s += double{row[d]} * q[d];
    scored[i] = {static_cast<float>(std::clamp(s, -1.0, 1.0)), i};
  }
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(std::min(n, scored.size())),
                    scored.end(), [&](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : db.ids[a.second] < db.ids[b.second];
                    });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(n, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact cosine search benchmark on synthetic unit vectors", "attnvpr_bench_search"};
  std::size_t rows = 200000, dim = 512, queries = 100, top_n = 10;
  unsigned threads = 1;
  std::uint64_t seed = 7;
  app.add_option("--rows", rows, "Database rows")->check(CLI::PositiveNumber);
  app.add_option("--dim", dim, "Descriptor dimension")->check(CLI::PositiveNumber);
  app.add_option("--queries", queries, "Timed queries, each spot-checked against a naive scan")
      ->check(CLI::PositiveNumber);
  app.add_option("--topn", top_n, "Hits per query")->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "Threads for database generation")->check(CLI::Range(1u, 1024u));
  app.add_option("--seed", seed, "RNG seed");
  CLI11_PARSE(app, argc, argv);

  const double gib = static_cast<double>(rows) * dim * 4 / (1024.0 * 1024.0 * 1024.0);
  std::cout << fmt::format("generating {} x {} database ({:.2f} GiB)\n", rows, dim, gib) << std::flush;

  auto db = std::make_shared<attnvpr::DescriptorDb>();
  db->dim = static_cast<std::uint32_t>(dim);
  db->rows.resize(rows * dim);
  db->ids.resize(rows);
  db->geotags.resize(rows);
  const std::size_t chunks = 256;
  attnvpr::parallel_for(chunks, threads, [&](std::size_t c) {
    Rng rng(seed * 1000003 + c);
    for (std::size_t i = c; i < rows; i += chunks) {
      fill_unit(rng, db->rows.data() + i * dim, dim);
      db->ids[i] = fmt::format("db{:08d}", i);
    }
  });

  const auto t_index = std::chrono::steady_clock::now();
  const attnvpr::SearchIndex index(db);
  const double index_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_index).count();

  Rng qrng(seed ^ 0x5bd1e995);
  std::vector<float> q(dim);
  std::vector<double> latencies;
  std::size_t mismatches = 0;
  for (std::size_t k = 0; k < queries; ++k) {
    fill_unit(qrng, q.data(), dim);
    const auto t0 = std::chrono::steady_clock::now();
    const auto hits = index.search(q, top_n);
    latencies.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    const auto want = naive_top(*db, q, top_n);
    for (std::size_t i = 0; i < want.size(); ++i) mismatches += hits.hits[i].db_index != want[i];
  }
  std::sort(latencies.begin(), latencies.end());
  const auto pct = [&](double p) { return latencies[static_cast<std::size_t>(p * (latencies.size() - 1))]; };
  std::cout << fmt::format("index build {:.3f} s\n", index_s);
  std::cout << fmt::format("search latency ms: p50 {:.2f}  p90 {:.2f}  max {:.2f}\n", pct(0.5), pct(0.9),
                           latencies.back());
  std::cout << fmt::format("oracle spot-check: {} of {} queries, {} rank mismatches\n", queries, queries, mismatches);
  return mismatches == 0 ? 0 : 1;
}
