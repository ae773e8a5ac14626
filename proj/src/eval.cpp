#include "serm/eval.hpp"

#include <algorithm>
#include <cmath>

#include "serm/errors.hpp"
#include "serm/parallel.hpp"

namespace serm {

RankedList::RankedList(std::string query_id, std::vector<RankedEntry> entries)
    : query_id_(std::move(query_id)), entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
}

std::vector<int> RankedList::labels() const {
  std::vector<int> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.label);
  return out;
}

namespace {

double dcg(const std::vector<int>& labels, int k) {
  double total = 0.0;
  const auto n = std::min<std::size_t>(labels.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i)
    total += (std::exp2(static_cast<double>(labels[i])) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  return total;
}

}  // namespace

double ndcg_at_k(const std::vector<int>& labels, int k) {
  if (k < 1) throw InputError("ndcg_at_k needs k >= 1");
  if (labels.empty()) throw InputError("ndcg_at_k needs a non-empty list");
  std::vector<int> ideal = labels;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg(ideal, k);
  if (idcg == 0.0) return 1.0;
  return dcg(labels, k) / idcg;
}

double ndcg_at_k(const RankedList& ranked, int k) { return ndcg_at_k(ranked.labels(), k); }

double relevance_accuracy(const std::vector<std::pair<int, int>>& predictions) {
  if (predictions.empty()) throw InputError("relevance_accuracy needs at least one prediction");
  const auto hits = std::count_if(predictions.begin(), predictions.end(),
                                  [](const auto& p) { return p.first == p.second; });
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double sbs_delta(std::int64_t good, std::int64_t bad, std::int64_t same) {
  if (good < 0 || bad < 0 || same < 0) throw InputError("SBS counts must be non-negative");
  const std::int64_t denom = good - bad + same;
  if (denom == 0) throw UndefinedRatio("G - B + S is zero");
  return static_cast<double>(good - bad) / static_cast<double>(denom);
}

double ab_absolute_gain(double rate_gain, double population) {
  if (population < 0.0) throw InputError("population must be non-negative");
  return rate_gain * population;
}

namespace {

Json metrics_json(const std::string& scope, const Metrics& m) {
  return Json{{"scope", scope},       {"ndcg1", m.ndcg1},         {"ndcg4", m.ndcg4},
              {"accuracy", m.accuracy}, {"num_queries", m.num_queries}, {"num_pairs", m.num_pairs}};
}

Metrics metrics_from_json(const Json& j) {
  try {
    Metrics m;
    m.ndcg1 = j.at("ndcg1").get<double>();
    m.ndcg4 = j.at("ndcg4").get<double>();
    m.accuracy = j.at("accuracy").get<double>();
    m.num_queries = j.at("num_queries").get<std::int64_t>();
    m.num_pairs = j.at("num_pairs").get<std::int64_t>();
    return m;
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed metrics row: ") + e.what());
  }
}

}  // namespace

std::vector<Json> metric_rows(const MetricBlock& block) {
  std::vector<Json> rows{metrics_json("overall", block.overall)};
  for (LanguageFamily f : kAllFamilies)
    if (auto it = block.per_family.find(f); it != block.per_family.end())
      rows.push_back(metrics_json(std::string(to_string(f)), it->second));
  return rows;
}

MetricBlock metric_block_from_rows(const std::vector<Json>& rows) {
  MetricBlock block;
  bool have_overall = false;
  for (const auto& row : rows) {
    if (!row.is_object() || !row.contains("scope") || !row["scope"].is_string())
      throw InputError("metrics row has no scope");
    const auto scope = row["scope"].get<std::string>();
    if (scope == "overall") {
      block.overall = metrics_from_json(row);
      have_overall = true;
    } else {
      block.per_family[parse_language_family(scope)] = metrics_from_json(row);
    }
  }
  if (!have_overall) throw InputError("metrics rows have no overall scope");
  return block;
}

Json to_json(const MetricBlock& block) {
  Json j{{"rows", metric_rows(block)},
         {"all_zero_queries", block.overall.all_zero_queries},
         {"skipped_queries", block.skipped_queries}};
  return j;
}

MetricBlock metric_block_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("rows") || !j["rows"].is_array()) throw InputError("metric block has no rows");
  MetricBlock block = metric_block_from_rows(j["rows"].get<std::vector<Json>>());
  block.overall.all_zero_queries = j.value("all_zero_queries", std::int64_t{0});
  block.skipped_queries = j.value("skipped_queries", std::int64_t{0});
  return block;
}

MetricBlock evaluate(const RelevanceModel& model, const QueryBatch& batch, const World& world, std::size_t workers) {
  struct PerQuery {
    bool skipped = true;
    bool all_zero = false;
    double ndcg1 = 0.0, ndcg4 = 0.0;
    std::int64_t hits = 0, pairs = 0;
  };

  std::vector<const Query*> queries;
  for (const auto& q : batch.queries) queries.push_back(&q);
  std::sort(queries.begin(), queries.end(), [](const Query* a, const Query* b) { return a->id < b->id; });

  std::vector<PerQuery> results(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t i) {
    const Query& q = *queries[i];
    auto it = batch.candidates.find(q.id);
    if (it == batch.candidates.end() || it->second.empty()) return;
    std::vector<RankedEntry> entries;
    PerQuery& r = results[i];
    for (const auto& doc_id : it->second) {
      const auto dist = model.label_distribution(world.pair(q, doc_id));
      const int label = batch.truth.at(q.id, doc_id);
      entries.push_back({doc_id, expected_score(dist).normalized, label});
      r.hits += dist.argmax() == label ? 1 : 0;
      ++r.pairs;
    }
    RankedList ranked(q.id, std::move(entries));
    const auto labels = ranked.labels();
    r.skipped = false;
    r.all_zero = std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0; });
    r.ndcg1 = ndcg_at_k(labels, 1);
    r.ndcg4 = ndcg_at_k(labels, 4);
  });

  struct Acc {
    double ndcg1 = 0.0, ndcg4 = 0.0;
    std::int64_t queries = 0, pairs = 0, hits = 0, all_zero = 0;
    void add(const PerQuery& r) {
      ndcg1 += r.ndcg1;
      ndcg4 += r.ndcg4;
      ++queries;
      pairs += r.pairs;
      hits += r.hits;
      all_zero += r.all_zero ? 1 : 0;
    }
    Metrics finish() const {
      Metrics m;
      m.num_queries = queries;
      m.num_pairs = pairs;
      m.all_zero_queries = all_zero;
      if (queries > 0) {
        m.ndcg1 = ndcg1 / static_cast<double>(queries);
        m.ndcg4 = ndcg4 / static_cast<double>(queries);
      }
      if (pairs > 0) m.accuracy = static_cast<double>(hits) / static_cast<double>(pairs);
      return m;
    }
  };

  Acc overall;
  std::map<LanguageFamily, Acc> families;
  MetricBlock block;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (results[i].skipped) {
      ++block.skipped_queries;
      continue;
    }
    overall.add(results[i]);
    families[queries[i]->language_family].add(results[i]);
  }
  block.overall = overall.finish();
  for (const auto& [f, acc] : families) block.per_family[f] = acc.finish();
  return block;
}

}  // namespace serm
