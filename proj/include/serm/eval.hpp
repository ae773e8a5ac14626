#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "serm/core.hpp"
#include "serm/model.hpp"
#include "serm/simulator.hpp"

namespace serm {

struct RankedEntry {
  std::string doc_id;
  double score = 0.0;
  int label = 0;
};

/// Entries ordered by score descending, ties by doc_id ascending.
class RankedList {
 public:
  RankedList(std::string query_id, std::vector<RankedEntry> entries);

  const std::string& query_id() const noexcept { return query_id_; }
  const std::vector<RankedEntry>& entries() const noexcept { return entries_; }
  std::vector<int> labels() const;

 private:
  std::string query_id_;
  std::vector<RankedEntry> entries_;
};

// Gain 2^l - 1, discount log2(i + 1). A list whose ideal DCG is zero scores 1.
// Throws InputError when k < 1 or the list is empty.
double ndcg_at_k(const std::vector<int>& labels_in_rank_order, int k);
double ndcg_at_k(const RankedList& ranked, int k);

// Fraction of (predicted, true) pairs that match. Throws InputError when empty.
double relevance_accuracy(const std::vector<std::pair<int, int>>& predictions);

// (G - B) / (G - B + S). Throws UndefinedRatio on a zero denominator.
double sbs_delta(std::int64_t good, std::int64_t bad, std::int64_t same);

double ab_absolute_gain(double rate_gain, double population);

struct Metrics {
  double ndcg1 = 0.0;
  double ndcg4 = 0.0;
  double accuracy = 0.0;
  std::int64_t num_queries = 0;
  std::int64_t num_pairs = 0;
  std::int64_t all_zero_queries = 0;  // scored 1.0 by convention
};

struct MetricBlock {
  Metrics overall;
  std::map<LanguageFamily, Metrics> per_family;  // families with at least one query
  std::int64_t skipped_queries = 0;              // no candidates
};

// metrics.jsonl rows: overall first, then families in declaration order.
std::vector<Json> metric_rows(const MetricBlock& block);
MetricBlock metric_block_from_rows(const std::vector<Json>& rows);
Json to_json(const MetricBlock& block);
MetricBlock metric_block_from_json(const Json& j);

/// Ranks each query's candidates by normalized expected score and averages
/// NDCG over queries (sorted by id) and argmax accuracy over pairs.
MetricBlock evaluate(const RelevanceModel& model, const QueryBatch& batch, const World& world,
                     std::size_t workers = 1);

}  // namespace serm
