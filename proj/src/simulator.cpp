#include "serm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "serm/errors.hpp"
#include "serm/hash.hpp"
#include "serm/jsonl.hpp"
#include "serm/logging.hpp"
#include "serm/random.hpp"
#include "serm/strict_json.hpp"

namespace serm {

namespace {

constexpr int kFillerPool = 400;
constexpr int kQueryNoisePool = 300;
constexpr int kGroupTerms = 3;
constexpr double kSecondaryTopicProb = 0.3;
constexpr double kQueryGroupTermProb = 0.5;
constexpr double kFamilyWeights[] = {0.5, 0.3, 0.2};

std::string padded(const std::string& prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i);
  return prefix + buf;
}

std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (const auto& t : toks) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::string group_term(int group, int i) { return "g" + std::to_string(group) + "w" + std::to_string(i); }

void check(bool ok, const char* field, const std::string& msg) {
  if (!ok) throw ConfigError(msg, std::string("world.") + field);
}

}  // namespace

void WorldConfig::validate() const {
  check(num_topics >= 2, "num_topics", "must be >= 2");
  check(vocab_per_topic >= 4, "vocab_per_topic", "must be >= 4");
  check(num_docs >= 1, "num_docs", "must be >= 1");
  check(queries_per_iteration >= 1, "queries_per_iteration", "must be >= 1");
  check(drift_rate >= 0.0 && drift_rate <= 1.0, "drift_rate", "must be in [0, 1]");
  check(!position_examine_probs.empty(), "position_examine_probs", "must be non-empty");
  for (double p : position_examine_probs)
    check(p > 0.0 && p <= 1.0, "position_examine_probs", "entries must be in (0, 1]");
  check(examine_floor > 0.0 && examine_floor <= 1.0, "examine_floor", "must be in (0, 1]");
  check(dwell_mean_per_label.size() == 4, "dwell_mean_per_label", "needs one entry per label");
  for (std::size_t i = 0; i < dwell_mean_per_label.size(); ++i) {
    check(dwell_mean_per_label[i] > 0.0, "dwell_mean_per_label", "entries must be positive");
    if (i > 0)
      check(dwell_mean_per_label[i] >= dwell_mean_per_label[i - 1], "dwell_mean_per_label",
            "must be non-decreasing in label");
  }
  check(attractiveness.size() == 4, "attractiveness", "needs one entry per label");
  for (std::size_t i = 0; i < attractiveness.size(); ++i) {
    check(attractiveness[i] >= 0.0 && attractiveness[i] <= 1.0, "attractiveness", "entries must be in [0, 1]");
    if (i > 0)
      check(attractiveness[i] >= attractiveness[i - 1], "attractiveness", "must be non-decreasing in label");
  }
  check(num_waves >= 0, "num_waves", "must be >= 0");
  check(topics_per_wave >= 1, "topics_per_wave", "must be >= 1");
  check(base_topics() >= 1, "num_topics", "must leave at least one base topic after drift waves");
  check(topic_group_size >= 1, "topic_group_size", "must be >= 1");
  check(sft_queries >= 1, "sft_queries", "must be >= 1");
  check(eval_queries >= 1, "eval_queries", "must be >= 1");
  check(eval_drift_fraction >= 0.0 && eval_drift_fraction <= 1.0, "eval_drift_fraction", "must be in [0, 1]");
  check(num_waves > 0 || eval_drift_fraction == 0.0, "eval_drift_fraction", "requires num_waves > 0");
  check(candidates_top_m >= 1, "candidates_top_m", "must be >= 1");
  check(random_negatives >= 0, "random_negatives", "must be >= 0");
  check(trend_terms_per_topic >= 1, "trend_terms_per_topic", "must be >= 1");
  check(query_trend_terms >= 0 && query_trend_terms <= trend_terms_per_topic, "query_trend_terms",
        "must be in [0, trend_terms_per_topic]");
  check(drift_query_topic_terms >= 0 && drift_query_topic_terms <= vocab_per_topic, "drift_query_topic_terms",
        "must be in [0, vocab_per_topic]");
  check(drift_query_topic_terms + query_trend_terms >= 1, "drift_query_topic_terms",
        "queries on wave topics need at least one topic or trending term");
  check(clickbait_fraction >= 0.0 && clickbait_fraction <= 1.0, "clickbait_fraction", "must be in [0, 1]");
  check(sessions_per_query >= 1, "sessions_per_query", "must be >= 1");
}

Json to_json(const WorldConfig& c) {
  return Json{{"num_topics", c.num_topics},
              {"vocab_per_topic", c.vocab_per_topic},
              {"num_docs", c.num_docs},
              {"queries_per_iteration", c.queries_per_iteration},
              {"drift_rate", c.drift_rate},
              {"position_examine_probs", c.position_examine_probs},
              {"examine_floor", c.examine_floor},
              {"dwell_mean_per_label", c.dwell_mean_per_label},
              {"attractiveness", c.attractiveness},
              {"seed", c.seed},
              {"num_waves", c.num_waves},
              {"topics_per_wave", c.topics_per_wave},
              {"topic_group_size", c.topic_group_size},
              {"sft_queries", c.sft_queries},
              {"eval_queries", c.eval_queries},
              {"eval_drift_fraction", c.eval_drift_fraction},
              {"candidates_top_m", c.candidates_top_m},
              {"random_negatives", c.random_negatives},
              {"trend_terms_per_topic", c.trend_terms_per_topic},
              {"query_trend_terms", c.query_trend_terms},
              {"drift_query_topic_terms", c.drift_query_topic_terms},
              {"clickbait_fraction", c.clickbait_fraction},
              {"sessions_per_query", c.sessions_per_query}};
}

WorldConfig world_config_from_json(const Json& j) {
  WorldConfig c;
  StrictReader r(j, "world");
  r.optional("num_topics", c.num_topics);
  r.optional("vocab_per_topic", c.vocab_per_topic);
  r.optional("num_docs", c.num_docs);
  r.optional("queries_per_iteration", c.queries_per_iteration);
  r.optional("drift_rate", c.drift_rate);
  r.optional("position_examine_probs", c.position_examine_probs);
  r.optional("examine_floor", c.examine_floor);
  r.optional("dwell_mean_per_label", c.dwell_mean_per_label);
  r.optional("attractiveness", c.attractiveness);
  r.optional("seed", c.seed);
  r.optional("num_waves", c.num_waves);
  r.optional("topics_per_wave", c.topics_per_wave);
  r.optional("topic_group_size", c.topic_group_size);
  r.optional("sft_queries", c.sft_queries);
  r.optional("eval_queries", c.eval_queries);
  r.optional("eval_drift_fraction", c.eval_drift_fraction);
  r.optional("candidates_top_m", c.candidates_top_m);
  r.optional("random_negatives", c.random_negatives);
  r.optional("trend_terms_per_topic", c.trend_terms_per_topic);
  r.optional("query_trend_terms", c.query_trend_terms);
  r.optional("drift_query_topic_terms", c.drift_query_topic_terms);
  r.optional("clickbait_fraction", c.clickbait_fraction);
  r.optional("sessions_per_query", c.sessions_per_query);
  r.finish();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

void GroundTruth::set(const std::string& query_id, const std::string& doc_id, int label) {
  labels_[{query_id, doc_id}] = label;
}

std::optional<int> GroundTruth::find(const std::string& query_id, const std::string& doc_id) const {
  auto it = labels_.find({query_id, doc_id});
  if (it == labels_.end()) return std::nullopt;
  return it->second;
}

int GroundTruth::at(const std::string& query_id, const std::string& doc_id) const {
  auto v = find(query_id, doc_id);
  if (!v) throw InputError("no ground truth for " + query_id + "/" + doc_id);
  return *v;
}

void GroundTruth::merge(const GroundTruth& other) {
  for (const auto& [k, v] : other.labels_) labels_[k] = v;
}

int true_label(const QueryProfile& query, const DocProfile& doc, const Document& doc_text, int group_size) {
  if (doc.primary_topic == query.topic) {
    const auto title = tokenize(doc_text.title);
    for (const auto& t : query.topic_terms) {
      if (std::find(title.begin(), title.end(), t) != title.end()) return 3;
    }
    for (const auto& t : query.trend_terms) {
      if (std::find(doc_text.hashtags.begin(), doc_text.hashtags.end(), "#" + t) != doc_text.hashtags.end()) return 3;
    }
    return 2;
  }
  if (doc.secondary_topic == query.topic) return 2;
  const int g = query.topic / group_size;
  if (doc.primary_topic / group_size == g) return 1;
  if (doc.secondary_topic >= 0 && doc.secondary_topic / group_size == g) return 1;
  return 0;
}

// ---------------------------------------------------------------------------

const Document& World::doc(const std::string& id) const {
  auto it = doc_index_.find(id);
  if (it == doc_index_.end()) throw InputError("unknown document " + id);
  return docs_[it->second];
}

const DocProfile& World::doc_profile(const std::string& id) const {
  auto it = doc_index_.find(id);
  if (it == doc_index_.end()) throw InputError("unknown document " + id);
  return doc_profiles_[it->second];
}

const QueryProfile& World::query_profile(const std::string& query_id) const {
  auto it = query_profiles_.find(query_id);
  if (it == query_profiles_.end()) throw InputError("unknown query " + query_id);
  return it->second;
}

std::vector<std::string> World::topic_terms(int topic) const {
  std::vector<std::string> out;
  for (int i = 0; i < config_.vocab_per_topic; ++i)
    out.push_back("t" + std::to_string(topic) + "w" + std::to_string(i));
  return out;
}

std::vector<std::string> World::trend_terms(int topic) const {
  std::vector<std::string> out;
  if (topic_wave(topic) == 0) return out;
  for (int i = 0; i < config_.trend_terms_per_topic; ++i)
    out.push_back("s" + std::to_string(topic) + "w" + std::to_string(i));
  return out;
}

int World::topic_wave(int topic) const {
  const int base = config_.base_topics();
  if (topic < base) return 0;
  return 1 + (topic - base) / config_.topics_per_wave;
}

std::string World::corpus_hash() const {
  std::string bytes;
  for (const auto& d : docs_) {
    bytes += canonical_dump(to_json(d));
    bytes += '\n';
  }
  return sha256_hex(bytes);
}

QueryDocumentPair World::pair(const Query& q, const std::string& doc_id,
                              std::vector<InteractionRecord> interactions) const {
  return QueryDocumentPair{q, doc(doc_id), std::move(interactions)};
}

QueryBatch World::make_batch(const std::string& id_prefix, int arrival_iteration,
                             const std::vector<std::pair<int, bool>>& topics, std::uint64_t seed) {
  QueryBatch batch;
  Rng rng(seed);
  const int width = topics.size() >= 10000 ? 5 : 4;
  for (std::size_t i = 0; i < topics.size(); ++i) {
    const auto [topic, drifted] = topics[i];
    QueryProfile profile;
    profile.topic = topic;
    profile.wave = topic_wave(topic);
    profile.drifted = drifted;

    const auto vocab = topic_terms(topic);
    const std::size_t n_topic_terms = profile.wave > 0 ? static_cast<std::size_t>(config_.drift_query_topic_terms) : 2;
    for (auto idx : rng.sample_without_replacement(vocab.size(), n_topic_terms))
      profile.topic_terms.push_back(vocab[idx]);
    std::vector<std::string> toks = profile.topic_terms;
    if (rng.bernoulli(kQueryGroupTermProb))
      toks.push_back(group_term(topic / config_.topic_group_size, static_cast<int>(rng.index(kGroupTerms))));
    toks.push_back("n" + std::to_string(rng.index(kQueryNoisePool)));
    if (profile.wave > 0) {
      const auto trend = trend_terms(topic);
      for (auto idx : rng.sample_without_replacement(trend.size(), static_cast<std::size_t>(config_.query_trend_terms)))
        profile.trend_terms.push_back(trend[idx]);
      toks.insert(toks.end(), profile.trend_terms.begin(), profile.trend_terms.end());
    }
    rng.shuffle(toks);

    Query q;
    q.id = padded(id_prefix, i, width);
    q.text = join(toks);
    q.language_family = kAllFamilies[rng.categorical(kFamilyWeights)];
    q.arrival_iteration = arrival_iteration;

    // Retrieval: a query term in the title counts 2, elsewhere 1.
    std::unordered_map<std::size_t, int> score;
    std::unordered_set<std::string> uniq(toks.begin(), toks.end());
    for (const auto& t : uniq) {
      auto it = term_index_.find(t);
      if (it == term_index_.end()) continue;
      for (auto d : it->second) {
        score[d] += title_terms_[d].count(t) ? 2 : 1;
      }
    }
    std::vector<std::pair<std::size_t, int>> ranked(score.begin(), score.end());
    const std::uint64_t tie_seed = rng.next();
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      const auto ka = splitmix64(tie_seed ^ a.first), kb = splitmix64(tie_seed ^ b.first);
      return ka != kb ? ka < kb : a.first < b.first;
    });
    std::vector<std::string> cands;
    std::unordered_set<std::size_t> used;
    for (std::size_t r = 0; r < ranked.size() && static_cast<int>(r) < config_.candidates_top_m; ++r) {
      cands.push_back(docs_[ranked[r].first].id);
      used.insert(ranked[r].first);
    }
    const std::size_t want_neg =
        std::min<std::size_t>(static_cast<std::size_t>(config_.random_negatives), docs_.size() - used.size());
    std::size_t got = 0;
    while (got < want_neg) {
      const std::size_t d = rng.index(docs_.size());
      if (used.insert(d).second) {
        cands.push_back(docs_[d].id);
        ++got;
      }
    }

    for (const auto& did : cands) {
      batch.truth.set(q.id, did, true_label(profile, doc_profile(did), doc(did), config_.topic_group_size));
    }
    batch.candidates[q.id] = std::move(cands);
    query_profiles_[q.id] = std::move(profile);
    batch.queries.push_back(std::move(q));
  }
  return batch;
}

World generate_world(const WorldConfig& config) {
  config.validate();
  World w;
  w.config_ = config;
  Rng rng(derive_seed(config.seed, "corpus"));

  const int n_topics = config.num_topics;
  w.docs_.reserve(static_cast<std::size_t>(config.num_docs));
  for (int j = 0; j < config.num_docs; ++j) {
    DocProfile p;
    p.primary_topic = static_cast<int>(rng.index(static_cast<std::size_t>(n_topics)));
    if (rng.bernoulli(kSecondaryTopicProb)) {
      int s = static_cast<int>(rng.index(static_cast<std::size_t>(n_topics - 1)));
      if (s >= p.primary_topic) ++s;
      p.secondary_topic = s;
    }
    const auto pv = w.topic_terms(p.primary_topic);
    const int group = p.primary_topic / config.topic_group_size;
    auto pick = [&](const std::vector<std::string>& v, std::size_t k) {
      std::vector<std::string> out;
      for (auto idx : rng.sample_without_replacement(v.size(), k)) out.push_back(v[idx]);
      return out;
    };
    auto filler = [&] { return "f" + std::to_string(rng.index(kFillerPool)); };

    std::vector<std::string> title = pick(pv, 3);
    title.push_back(filler());
    std::vector<std::string> tags{"#" + pick(pv, 1)[0], "#" + group_term(group, static_cast<int>(rng.index(kGroupTerms)))};
    std::vector<std::string> summary = pick(pv, 4);
    summary.push_back(group_term(group, static_cast<int>(rng.index(kGroupTerms))));
    for (int f = 0; f < 5; ++f) summary.push_back(filler());
    if (p.secondary_topic >= 0) {
      const auto sv = w.topic_terms(p.secondary_topic);
      tags.push_back("#" + pick(sv, 1)[0]);
      for (auto& t : pick(sv, 2)) summary.push_back(std::move(t));
    }
    // Docs on a wave topic are tagged with some of the topic's trending terms.
    if (const auto tv = w.trend_terms(p.primary_topic); !tv.empty()) {
      for (auto& t : pick(tv, 1 + rng.index(tv.size()))) tags.push_back("#" + t);
    }
    // Clickbait: trending terms of a random wave topic in the title only.
    if (config.num_waves > 0 && rng.bernoulli(config.clickbait_fraction)) {
      const int n_wave_topics = config.num_waves * config.topics_per_wave;
      p.clickbait_topic = config.base_topics() + static_cast<int>(rng.index(static_cast<std::size_t>(n_wave_topics)));
      const auto tv = w.trend_terms(p.clickbait_topic);
      for (auto& t : pick(tv, 1 + rng.index(std::min<std::size_t>(2, tv.size())))) title.push_back(std::move(t));
    }
    rng.shuffle(title);
    rng.shuffle(summary);

    Document d{padded("d", static_cast<std::size_t>(j), 5), join(title), std::move(tags), join(summary)};
    w.doc_index_[d.id] = w.docs_.size();
    std::unordered_set<std::string> terms;
    for (auto& t : tokenize(d.title)) terms.insert(t);
    {
      auto tt = tokenize(d.title);
      w.title_terms_.emplace_back(tt.begin(), tt.end());
    }
    for (auto& t : tokenize(d.summary)) terms.insert(std::move(t));
    for (const auto& h : d.hashtags)
      for (auto& t : tokenize(h)) terms.insert(std::move(t));
    std::vector<std::string> sorted_terms(terms.begin(), terms.end());
    std::sort(sorted_terms.begin(), sorted_terms.end());
    for (const auto& t : sorted_terms) w.term_index_[t].push_back(w.docs_.size());
    w.docs_.push_back(std::move(d));
    w.doc_profiles_.push_back(p);
  }
  w.extractor_ = std::make_shared<const FeatureExtractor>(w.docs_);

  const int base = config.base_topics();
  Rng topic_rng(derive_seed(config.seed, "topics"));
  std::vector<std::pair<int, bool>> sft_topics;
  for (int i = 0; i < config.sft_queries; ++i)
    sft_topics.emplace_back(static_cast<int>(topic_rng.index(static_cast<std::size_t>(base))), false);
  w.sft_ = w.make_batch("s", 0, sft_topics, derive_seed(config.seed, "sft-queries"));

  std::vector<std::pair<int, bool>> eval_topics;
  const int n_eval_drift = static_cast<int>(std::llround(config.eval_drift_fraction * config.eval_queries));
  const int wave_topics = config.num_waves * config.topics_per_wave;
  for (int i = 0; i < config.eval_queries; ++i) {
    if (i < n_eval_drift) {
      eval_topics.emplace_back(base + static_cast<int>(topic_rng.index(static_cast<std::size_t>(wave_topics))), true);
    } else {
      eval_topics.emplace_back(static_cast<int>(topic_rng.index(static_cast<std::size_t>(base))), false);
    }
  }
  topic_rng.shuffle(eval_topics);
  w.eval_ = w.make_batch("e", 0, eval_topics, derive_seed(config.seed, "eval-queries"));

  std::vector<LabeledPair> sft_records;
  for (const auto& q : w.sft_.queries) {
    for (const auto& did : w.sft_.candidates.at(q.id)) {
      sft_records.push_back({w.pair(q, did), w.sft_.truth.at(q.id, did), "ground truth", Provenance::sft()});
    }
  }
  w.sft_dataset_ = dataset_merge({Dataset(w.labels_, std::move(sft_records))});
  return w;
}

QueryBatch stream_iteration(World& world, int iteration) {
  if (iteration < 1) throw InputError("stream iteration must be >= 1 (iteration 0 is the SFT epoch)");
  const auto& c = world.config_;
  const int n = c.queries_per_iteration;
  const int n_drift = static_cast<int>(std::llround(c.drift_rate * n));
  if (n_drift > 0 && iteration > c.num_waves)
    throw ConfigError("iteration " + std::to_string(iteration) + " has no drift wave", "world.num_waves");

  const int base = c.base_topics();
  std::vector<int> seen;
  for (int t = 0; t < base; ++t) seen.push_back(t);
  for (int k = 1; k < iteration && k <= c.num_waves; ++k)
    for (int i = 0; i < c.topics_per_wave; ++i) seen.push_back(base + (k - 1) * c.topics_per_wave + i);

  Rng rng(derive_seed(c.seed, "stream-topics", iteration));
  std::vector<std::pair<int, bool>> topics;
  for (int i = 0; i < n; ++i) {
    if (i < n_drift) {
      topics.emplace_back(base + (iteration - 1) * c.topics_per_wave +
                              static_cast<int>(rng.index(static_cast<std::size_t>(c.topics_per_wave))),
                          true);
    } else {
      topics.emplace_back(seen[rng.index(seen.size())], false);
    }
  }
  rng.shuffle(topics);
  return world.make_batch("q" + std::to_string(iteration) + "-", iteration, topics,
                          derive_seed(c.seed, "stream-queries", iteration));
}

// ---------------------------------------------------------------------------

double examine_probability(const WorldConfig& config, int rank) {
  if (rank < 1) throw InputError("rank must be >= 1");
  const auto idx = static_cast<std::size_t>(rank - 1);
  return idx < config.position_examine_probs.size() ? config.position_examine_probs[idx] : config.examine_floor;
}

double click_probability_at(const WorldConfig& config, int rank, int label) {
  return examine_probability(config, rank) * config.attractiveness.at(static_cast<std::size_t>(label));
}

std::vector<InteractionRecord> simulate_interactions(
    const std::vector<Query>& queries, const std::map<std::string, std::vector<std::string>>& ranked,
    const GroundTruth& truth, const WorldConfig& config, std::uint64_t seed) {
  std::vector<InteractionRecord> logs;
  for (const auto& q : queries) {
    auto it = ranked.find(q.id);
    if (it == ranked.end()) continue;
    Rng rng(derive_seed(seed, "interactions", q.id));
    for (int s = 0; s < config.sessions_per_query; ++s) {
      int rank = 1;
      for (const auto& did : it->second) {
        const int label = truth.at(q.id, did);
        InteractionRecord r{q.id, did, false, 0.0, rank};
        if (rng.bernoulli(examine_probability(config, rank)) &&
            rng.bernoulli(config.attractiveness.at(static_cast<std::size_t>(label)))) {
          r.clicked = true;
          r.dwell_seconds = rng.exponential(config.dwell_mean_per_label.at(static_cast<std::size_t>(label)));
        }
        logs.push_back(std::move(r));
        ++rank;
      }
    }
  }
  return logs;
}

std::vector<std::string> rank_by_model(const RelevanceModel& model, const World& world, const Query& q,
                                       const std::vector<std::string>& doc_ids) {
  std::vector<std::pair<double, std::string>> scored;
  scored.reserve(doc_ids.size());
  for (const auto& did : doc_ids) {
    scored.emplace_back(expected_score(model.label_distribution(world.pair(q, did))).normalized, did);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> out;
  for (auto& [s, d] : scored) out.push_back(std::move(d));
  return out;
}

// ---------------------------------------------------------------------------

ClickModel::ClickModel(std::shared_ptr<const FeatureExtractor> extractor)
    : extractor_(std::move(extractor)), weights_(Vector::Zero(kInputDim)) {
  if (!extractor_) throw ConfigError("click model needs a feature extractor");
}

ClickModel::ClickModel(std::shared_ptr<const FeatureExtractor> extractor, Vector weights)
    : extractor_(std::move(extractor)), weights_(std::move(weights)), fitted_(true) {
  if (!extractor_) throw ConfigError("click model needs a feature extractor");
  if (weights_.size() != kInputDim) throw InputError("click model weights have the wrong length");
}

Vector ClickModel::input(const Query& q, const Document& d, int rank) const {
  Vector x = Vector::Zero(kInputDim);
  x.head(FeatureExtractor::kFeatureDim) = extractor_->extract(q, d);
  const int bucket = std::clamp(rank, 1, kClickRankBuckets) - 1;
  x(FeatureExtractor::kFeatureDim + bucket) = 1.0;
  return x;
}

double ClickModel::probability_at(const QueryDocumentPair& pair, int rank) const {
  if (!fitted_) throw StateError("click model is not fitted");
  return sigmoid(weights_.dot(input(pair.query, pair.document, rank)));
}

double ClickModel::probability(const QueryDocumentPair& pair) const { return probability_at(pair, 1); }

double click_probability(const ClickModel& model, const QueryDocumentPair& pair) {
  return model.probability(pair);
}

double click_loss(const Vector& w, const RowMatrix& x, const Vector& clicked, Vector* grad) {
  const Vector z = x * w;
  const auto n = static_cast<double>(x.rows());
  double loss = 0.0;
  Vector residual(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    loss -= clicked(i) * log_sigmoid(z(i)) + (1.0 - clicked(i)) * log_sigmoid(-z(i));
    residual(i) = sigmoid(z(i)) - clicked(i);
  }
  if (grad) *grad = x.transpose() * residual / n;
  return loss / n;
}

ClickModel fit_click_model(const std::vector<InteractionRecord>& logs,
                           const std::unordered_map<std::string, Query>& queries,
                           const std::unordered_map<std::string, Document>& docs,
                           std::shared_ptr<const FeatureExtractor> extractor, const TrainOptions& options) {
  if (logs.empty()) throw InputError("fit_click_model needs non-empty logs");
  ClickModel model(std::move(extractor));
  RowMatrix x(static_cast<Eigen::Index>(logs.size()), ClickModel::kInputDim);
  Vector y(static_cast<Eigen::Index>(logs.size()));
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const auto& r = logs[i];
    auto qi = queries.find(r.query_id);
    auto di = docs.find(r.doc_id);
    if (qi == queries.end() || di == docs.end())
      throw InputError("log references unknown pair " + r.query_id + "/" + r.doc_id);
    x.row(static_cast<Eigen::Index>(i)) = model.input(qi->second, di->second, r.impression_rank).transpose();
    y(static_cast<Eigen::Index>(i)) = r.clicked ? 1.0 : 0.0;
  }
  const double positives = y.sum();
  if (positives == 0.0 || positives == static_cast<double>(y.size())) {
    log_warning("click logs are all-positive or all-negative; click model fit is degenerate");
    model.degenerate_ = true;
  }
  Matrix w = model.weights_.transpose();
  auto objective = [&](const Matrix& cur, Matrix* g) {
    Vector gv;
    const double loss = click_loss(cur.transpose(), x, y, g ? &gv : nullptr);
    if (g) *g = gv.transpose();
    return loss;
  };
  gradient_descent(w, objective, options);
  model.weights_ = w.transpose();
  model.fitted_ = true;
  return model;
}

}  // namespace serm
