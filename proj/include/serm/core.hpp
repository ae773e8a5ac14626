#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace serm {

using Json = nlohmann::json;

/// Graded relevance labels 0..cardinality-1, 0 = bad, cardinality-1 = best.
class LabelSet {
 public:
  explicit LabelSet(int cardinality = 4);

  int cardinality() const noexcept { return cardinality_; }
  int max_label() const noexcept { return cardinality_ - 1; }
  bool contains(int label) const noexcept { return label >= 0 && label < cardinality_; }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  int cardinality_;
};

enum class LanguageFamily { Germanic, Romance, Minor };

std::string_view to_string(LanguageFamily family);
LanguageFamily parse_language_family(std::string_view name);
inline constexpr LanguageFamily kAllFamilies[] = {LanguageFamily::Germanic,
                                                  LanguageFamily::Romance,
                                                  LanguageFamily::Minor};

struct Query {
  std::string id;
  std::string text;
  LanguageFamily language_family = LanguageFamily::Germanic;
  int arrival_iteration = 0;
};

struct Document {
  std::string id;
  std::string title;
  std::vector<std::string> hashtags;
  std::string summary;
};

struct InteractionRecord {
  std::string query_id;
  std::string doc_id;
  bool clicked = false;
  double dwell_seconds = 0.0;
  int impression_rank = 1;
};

struct QueryDocumentPair {
  Query query;
  Document document;
  std::vector<InteractionRecord> interactions;
};

// Throws InputError when any of the record invariants are violated.
void validate(const Query& q);
void validate(const Document& d);
void validate(const InteractionRecord& r);
void validate(const QueryDocumentPair& p);

/// Probability vector over a LabelSet. Construction validates that entries are
/// non-negative and sum to one within 1e-9; the vector is never rescaled.
class LabelDistribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit LabelDistribution(Eigen::VectorXd probs);
  static LabelDistribution uniform(int cardinality);
  static LabelDistribution point_mass(int cardinality, int label);

  const Eigen::VectorXd& probs() const noexcept { return probs_; }
  int cardinality() const noexcept { return static_cast<int>(probs_.size()); }
  double operator[](int label) const { return probs_(label); }

  // Lowest label among those with maximal probability.
  int argmax() const;

 private:
  Eigen::VectorXd probs_;
};

enum class JudgmentSource { Model, AnnotatorPath, ConsensusAgent };

struct Judgment {
  int label = 0;
  std::string rationale;
  JudgmentSource source = JudgmentSource::Model;
  std::string backend_id;  // empty for model judgments
};

struct Provenance {
  enum class Kind { SFT, SERM, SelfTraining };
  Kind kind = Kind::SFT;
  int iteration = 0;

  static Provenance sft() { return {Kind::SFT, 0}; }
  static Provenance serm(int k);
  static Provenance self_training(int k);

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

std::string_view to_string(Provenance::Kind kind);
Provenance::Kind parse_provenance_kind(std::string_view name);

struct LabeledPair {
  QueryDocumentPair pair;
  int label = 0;
  std::string rationale;
  Provenance provenance;
};

/// Ordered labeled records plus a digest of their canonical serialization.
class Dataset {
 public:
  Dataset() = default;
  Dataset(LabelSet labels, std::vector<LabeledPair> records);

  const LabelSet& label_set() const noexcept { return labels_; }
  const std::vector<LabeledPair>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const std::string& content_hash() const noexcept { return hash_; }

  // labeled.jsonl bytes for this dataset; content_hash is its SHA-256.
  std::string canonical_jsonl() const;

 private:
  LabelSet labels_;
  std::vector<LabeledPair> records_;
  std::string hash_;
};

/// Union of the parts. A (query_id, doc_id) present in several parts keeps the
/// record with the latest provenance iteration (later part on equal
/// iterations). Output is sorted by (query_id, doc_id).
Dataset dataset_merge(const std::vector<Dataset>& parts);

// Canonical text for hashing: sorted keys, no whitespace, UTF-8.
std::string canonical_dump(const Json& j);

// JSONL record formats.
Json to_json(const Query& q);
Json to_json(const Document& d);
Json to_json(const InteractionRecord& r);
Json to_json(const LabeledPair& r);

Query query_from_json(const Json& j);
Document document_from_json(const Json& j);
InteractionRecord interaction_from_json(const Json& j);

struct LabeledRecordRef {
  std::string query_id;
  std::string doc_id;
  int label = 0;
  std::string rationale;
  Provenance provenance;
};
LabeledRecordRef labeled_from_json(const Json& j);

}  // namespace serm
