#include "attnvpr/retrieval.hpp"

#include <algorithm>
#include <numeric>

#include "attnvpr/error.hpp"
#include "attnvpr/parallel.hpp"

namespace attnvpr {

namespace {

float dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double{a[i]} * b[i];
  return static_cast<float>(std::clamp(acc, -1.0, 1.0));
}

}  // namespace

SearchIndex::SearchIndex(std::shared_ptr<const DescriptorDb> db) : db_(std::move(db)) {
  if (!db_ || db_->size() == 0) throw Error(ErrorCode::EmptyDb, "cannot index an empty descriptor db");
  std::vector<std::size_t> order(db_->size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return db_->ids[a] < db_->ids[b]; });
  id_rank_.resize(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) id_rank_[order[r]] = static_cast<std::uint32_t>(r);
}

RankedList SearchIndex::search(std::span<const float> query, std::size_t top_n, std::string query_id) const {
  if (query.size() != db_->dim) {
    throw Error(ErrorCode::DimMismatch, "query dim " + std::to_string(query.size()) + " != db dim " +
                                            std::to_string(db_->dim));
  }
  if (top_n == 0) throw Error(ErrorCode::InvalidArgument, "top-N must be at least 1");

  const std::size_t n = db_->size();
  std::vector<float> sims(n);
  for (std::size_t i = 0; i < n; ++i) sims[i] = dot(query, db_->row(i));

  const std::size_t keep = std::min(top_n, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return id_rank_[a] < id_rank_[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), better);

  RankedList out{std::move(query_id), {}};
  out.hits.reserve(keep);
  for (std::size_t r = 0; r < keep; ++r) {
    const std::size_t i = order[r];
    out.hits.push_back(Hit{db_->ids[i], sims[i], db_->geotags[i], i});
  }
  return out;
}

SearchIndex build_index(DescriptorDb db) {
  db.validate();
  return SearchIndex(std::make_shared<const DescriptorDb>(std::move(db)));
}

RankedList search(const DescriptorDb& db, std::span<const float> query, std::size_t top_n, std::string query_id) {
  if (db.size() == 0) throw Error(ErrorCode::EmptyDb, "cannot search an empty descriptor db");
  return SearchIndex(std::shared_ptr<const DescriptorDb>(&db, [](const DescriptorDb*) {}))
      .search(query, top_n, std::move(query_id));
}

Descriptor query_expand(std::span<const float> query, const RankedList& ranked, const DescriptorDb& db,
                        const QeConfig& cfg) {
  if (!(cfg.alpha_qe >= 0.0 && cfg.alpha_qe <= 1.0) || cfg.k == 0) {
    throw Error(ErrorCode::InvalidArgument, "query expansion needs alpha_qe in [0,1] and k >= 1");
  }
  if (ranked.hits.size() < cfg.k) {
    throw Error(ErrorCode::InsufficientHits, "query expansion needs " + std::to_string(cfg.k) + " hits, got " +
                                                 std::to_string(ranked.hits.size()));
  }
  if (query.size() != db.dim) throw Error(ErrorCode::DimMismatch, "query dim differs from db dim");

  std::vector<double> acc(query.size());
  for (std::size_t d = 0; d < query.size(); ++d) acc[d] = cfg.alpha_qe * query[d];
  const double share = (1.0 - cfg.alpha_qe) / static_cast<double>(cfg.k);
  for (std::size_t h = 0; h < cfg.k; ++h) {
    const Hit& hit = ranked.hits[h];
    std::size_t pos = hit.db_index;
    if (pos >= db.size() || db.ids[pos] != hit.db_id) {
      auto it = std::find(db.ids.begin(), db.ids.end(), hit.db_id);
      if (it == db.ids.end()) throw Error(ErrorCode::InvalidArgument, "hit '" + hit.db_id + "' not in db");
      pos = static_cast<std::size_t>(it - db.ids.begin());
    }
    const auto row = db.row(pos);
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += share * row[d];
  }
  std::vector<float> raw(acc.begin(), acc.end());
  return l2_normalize(raw);
}

std::vector<RankedList> search_all(const SearchIndex& index, const DescriptorDb& queries, std::size_t top_n,
                                   const QeConfig* qe, unsigned threads) {
  std::vector<RankedList> results(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t q) {
    const auto query = queries.row(q);
    if (!qe) {
      results[q] = index.search(query, top_n, queries.ids[q]);
      return;
    }
    const RankedList first = index.search(query, std::max(top_n, qe->k), queries.ids[q]);
    const Descriptor expanded = query_expand(query, first, index.db(), *qe);
    results[q] = index.search(expanded, top_n, queries.ids[q]);
  });
  return results;
}

}  // namespace attnvpr
