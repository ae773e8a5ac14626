#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "serm/core.hpp"
#include "serm/features.hpp"
#include "serm/math.hpp"
#include "serm/model.hpp"

namespace serm {

/// Synthetic world parameters.
///
/// Topics are split into base topics (seen from iteration 0) and drift waves:
/// wave k owns `topics_per_wave` topics that first appear in queries at
/// iteration k. Each wave topic has a few trending terms; its queries use them
/// and its documents carry them as hashtags, while a `clickbait_fraction` of
/// documents put some wave topic's trending terms in their titles.
struct WorldConfig {
  int num_topics = 44;
  int vocab_per_topic = 8;
  int num_docs = 3000;
  int queries_per_iteration = 1000;
  double drift_rate = 0.3;
  std::vector<double> position_examine_probs{1.0, 0.6, 0.4, 0.25};
  double examine_floor = 0.15;  // ranks past the end of position_examine_probs
  std::vector<double> dwell_mean_per_label{1.0, 3.0, 8.0, 15.0};
  std::vector<double> attractiveness{0.05, 0.2, 0.5, 0.8};
  std::uint64_t seed = 7;

  int num_waves = 5;
  int topics_per_wave = 4;
  int topic_group_size = 2;
  int sft_queries = 1000;
  int eval_queries = 1000;
  double eval_drift_fraction = 0.5;
  int candidates_top_m = 10;
  int random_negatives = 4;
  int trend_terms_per_topic = 3;
  int query_trend_terms = 2;
  int drift_query_topic_terms = 0;  // topic terms in queries on wave topics
  double clickbait_fraction = 0.05;
  int sessions_per_query = 1;

  int base_topics() const { return num_topics - num_waves * topics_per_wave; }

  // Throws ConfigError naming the offending field.
  void validate() const;
};

Json to_json(const WorldConfig& c);
// Strict: unknown keys and out-of-range values raise ConfigError("world.<key>").
WorldConfig world_config_from_json(const Json& j);

/// True relevance for (query, doc) pairs.
class GroundTruth {
 public:
  void set(const std::string& query_id, const std::string& doc_id, int label);
  std::optional<int> find(const std::string& query_id, const std::string& doc_id) const;
  int at(const std::string& query_id, const std::string& doc_id) const;
  std::size_t size() const noexcept { return labels_.size(); }
  const std::map<std::pair<std::string, std::string>, int>& entries() const noexcept { return labels_; }
  void merge(const GroundTruth& other);

 private:
  std::map<std::pair<std::string, std::string>, int> labels_;
};

struct DocProfile {
  int primary_topic = 0;
  int secondary_topic = -1;  // -1 when single-topic
  int clickbait_topic = -1;  // wave topic whose trending terms the title carries
};

struct QueryProfile {
  int topic = 0;
  int wave = 0;  // 0 for base topics
  bool drifted = false;
  std::vector<std::string> topic_terms;
  std::vector<std::string> trend_terms;
};

// Graded affinity rule: 3 when the doc's primary topic is the query topic and
// the title shares a query topic term or the hashtags a query trending term,
// 2 on any topic match, 1 when a doc topic shares the query topic's group, 0
// otherwise.
int true_label(const QueryProfile& query, const DocProfile& doc, const Document& doc_text, int group_size);

/// Queries plus candidate documents (in retrieval order) and their truth.
struct QueryBatch {
  std::vector<Query> queries;
  std::map<std::string, std::vector<std::string>> candidates;  // query_id -> doc ids
  GroundTruth truth;
};

class World {
 public:
  const WorldConfig& config() const noexcept { return config_; }
  const std::vector<Document>& docs() const noexcept { return docs_; }
  const Document& doc(const std::string& id) const;
  const DocProfile& doc_profile(const std::string& id) const;
  const QueryProfile& query_profile(const std::string& query_id) const;
  std::shared_ptr<const FeatureExtractor> extractor() const noexcept { return extractor_; }
  const LabelSet& label_set() const noexcept { return labels_; }

  const QueryBatch& sft_batch() const noexcept { return sft_; }
  const QueryBatch& eval_batch() const noexcept { return eval_; }
  const Dataset& sft_dataset() const noexcept { return sft_dataset_; }

  // Vocabulary of topic t / its trending terms (empty for base topics).
  std::vector<std::string> topic_terms(int topic) const;
  std::vector<std::string> trend_terms(int topic) const;
  int topic_wave(int topic) const;  // 0 for base topics

  // Deterministic content digest of the corpus.
  std::string corpus_hash() const;

  QueryDocumentPair pair(const Query& q, const std::string& doc_id,
                         std::vector<InteractionRecord> interactions = {}) const;

 private:
  friend World generate_world(const WorldConfig& config);
  friend QueryBatch stream_iteration(World& world, int iteration);

  QueryBatch make_batch(const std::string& id_prefix, int arrival_iteration,
                        const std::vector<std::pair<int, bool>>& topics, std::uint64_t seed);

  WorldConfig config_;
  LabelSet labels_;
  std::vector<Document> docs_;
  std::vector<DocProfile> doc_profiles_;
  std::unordered_map<std::string, std::size_t> doc_index_;
  std::unordered_map<std::string, std::vector<std::size_t>> term_index_;
  std::vector<std::unordered_set<std::string>> title_terms_;
  std::unordered_map<std::string, QueryProfile> query_profiles_;
  std::shared_ptr<const FeatureExtractor> extractor_;
  QueryBatch sft_;
  QueryBatch eval_;
  Dataset sft_dataset_;
};

// Throws ConfigError when the config is invalid (e.g. num_topics < 2).
World generate_world(const WorldConfig& config);

// Iteration k >= 1 of the query stream. Exactly round(drift_rate * Q) queries
// are on wave-k topics; the rest are on topics seen before iteration k.
QueryBatch stream_iteration(World& world, int iteration);

// Examine probability at a 1-based rank.
double examine_probability(const WorldConfig& config, int rank);
// P(click) = examine(rank) * attractiveness(label).
double click_probability_at(const WorldConfig& config, int rank, int label);

// One impression per session for each (query, candidate); `ranked` gives each
// query's candidates in display order (rank 1 first).
std::vector<InteractionRecord> simulate_interactions(
    const std::vector<Query>& queries, const std::map<std::string, std::vector<std::string>>& ranked,
    const GroundTruth& truth, const WorldConfig& config, std::uint64_t seed);

// Candidates of one query ordered by the model's normalized expected score
// (descending, ties by doc id).
std::vector<std::string> rank_by_model(const RelevanceModel& model, const World& world, const Query& q,
                                       const std::vector<std::string>& doc_ids);

inline constexpr int kClickRankBuckets = 5;  // ranks 1..4 and 5+

/// Logistic click model over lexical features concatenated with a rank one-hot.
class ClickModel {
 public:
  explicit ClickModel(std::shared_ptr<const FeatureExtractor> extractor);
  ClickModel(std::shared_ptr<const FeatureExtractor> extractor, Vector weights);

  static constexpr int kInputDim = FeatureExtractor::kFeatureDim + kClickRankBuckets;

  bool fitted() const noexcept { return fitted_; }
  bool degenerate() const noexcept { return degenerate_; }
  const Vector& weights() const noexcept { return weights_; }

  Vector input(const Query& q, const Document& d, int rank) const;

  // Click probability at reference rank 1. Throws StateError when unfitted.
  double probability(const QueryDocumentPair& pair) const;
  double probability_at(const QueryDocumentPair& pair, int rank) const;

 private:
  friend ClickModel fit_click_model(const std::vector<InteractionRecord>&,
                                    const std::unordered_map<std::string, Query>&,
                                    const std::unordered_map<std::string, Document>&,
                                    std::shared_ptr<const FeatureExtractor>, const TrainOptions&);
  std::shared_ptr<const FeatureExtractor> extractor_;
  Vector weights_;
  bool fitted_ = false;
  bool degenerate_ = false;
};

// Mean binary cross-entropy of sigmoid(X w) against `clicked`.
double click_loss(const Vector& w, const RowMatrix& x, const Vector& clicked, Vector* grad);

// Throws InputError on empty logs. All-positive or all-negative logs produce a
// warning and a model flagged degenerate.
ClickModel fit_click_model(const std::vector<InteractionRecord>& logs,
                           const std::unordered_map<std::string, Query>& queries,
                           const std::unordered_map<std::string, Document>& docs,
                           std::shared_ptr<const FeatureExtractor> extractor, const TrainOptions& options);

// Same as ClickModel::probability.
double click_probability(const ClickModel& model, const QueryDocumentPair& pair);

}  // namespace serm
