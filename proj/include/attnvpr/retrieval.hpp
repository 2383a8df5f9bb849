#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "attnvpr/aggregation.hpp"
#include "attnvpr/tensor_io.hpp"

namespace attnvpr {

struct Hit {
  std::string db_id;
  float similarity = 0.0f;
  GeoTag geotag;
  /// Row position in the searched db.
  std::size_t db_index = 0;
};

/// Hits ordered by non-increasing similarity, ties by ascending db_id.
struct RankedList {
  std::string query_id;
  std::vector<Hit> hits;
};

struct QeConfig {
  double alpha_qe = 0.8;
  std::size_t k = 5;
};

/// Exact inner-product index over an immutable descriptor db. Results are
/// independent of how many threads issue queries.
class SearchIndex {
 public:
  explicit SearchIndex(std::shared_ptr<const DescriptorDb> db);

  const DescriptorDb& db() const noexcept { return *db_; }
  std::size_t size() const noexcept { return db_->size(); }
  std::uint32_t dim() const noexcept { return db_->dim; }

  RankedList search(std::span<const float> query, std::size_t top_n, std::string query_id = {}) const;

 private:
  std::shared_ptr<const DescriptorDb> db_;
  // Rank of each row's id in ascending id order, for cheap tie-breaking.
  std::vector<std::uint32_t> id_rank_;
};

SearchIndex build_index(DescriptorDb db);

RankedList search(const DescriptorDb& db, std::span<const float> query, std::size_t top_n,
                  std::string query_id = {});

/// q' = normalize(alpha q + ((1 - alpha) / k) sum_{top-k} d_i).
Descriptor query_expand(std::span<const float> query, const RankedList& ranked, const DescriptorDb& db,
                        const QeConfig& cfg);

/// Searches every row of `queries`, optionally followed by a full second
/// search with the expanded query.
std::vector<RankedList> search_all(const SearchIndex& index, const DescriptorDb& queries, std::size_t top_n,
                                   const QeConfig* qe = nullptr, unsigned threads = 1);

}  // namespace attnvpr
