#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "serm/core.hpp"
#include "serm/miner.hpp"
#include "serm/simulator.hpp"

namespace serm {

// Contextual signals forwarded to annotators alongside the pair.
struct AnnotationContext {
  double ctr = 0.0;
  double dwell_time = 0.0;
  double cm_score = 0.0;
  double model_score = 0.0;
  double disagreement_score = 0.0;
  double uncertainty = 0.0;
};

AnnotationContext context_from(const MinedCandidate& c);

/// One annotator (e.g. one LLM). Implementations must be safe to call
/// concurrently for different pairs.
class AnnotatorBackend {
 public:
  virtual ~AnnotatorBackend() = default;
  virtual const std::string& backend_id() const = 0;

  // Exactly `paths` judgments, each with a non-empty rationale. Throws
  // BackendError once retries are exhausted.
  virtual std::vector<Judgment> annotate_paths(const QueryDocumentPair& pair, int paths, std::uint64_t seed,
                                               const AnnotationContext& context) const = 0;
};

/// Noisy oracle: each path independently reports the true label with
/// probability 1 - path_error_rate, otherwise a uniformly drawn wrong label.
class MockOracleBackend final : public AnnotatorBackend {
 public:
  MockOracleBackend(std::string backend_id, std::shared_ptr<const GroundTruth> truth, LabelSet labels,
                    double path_error_rate, std::uint64_t seed);

  const std::string& backend_id() const override { return id_; }
  double path_error_rate() const noexcept { return error_rate_; }

  std::vector<Judgment> annotate_paths(const QueryDocumentPair& pair, int paths, std::uint64_t seed,
                                       const AnnotationContext& context) const override;

 private:
  std::string id_;
  std::shared_ptr<const GroundTruth> truth_;
  LabelSet labels_;
  double error_rate_;
  std::uint64_t seed_;
};

struct HttpBackendOptions {
  std::string endpoint;  // http://host:port/path
  double timeout_seconds = 30.0;
  int max_retries = 2;
  int max_in_flight = 4;
};

/// JSON-over-POST annotator. Request:
///   {"query", "document", "context": {...}, "num_paths", "label_cardinality"}
/// Response: {"paths": [{"rationale": string, "score": integer}, ...]}.
/// A response that fails validation counts as a failed attempt.
class HttpBackend final : public AnnotatorBackend {
 public:
  HttpBackend(std::string backend_id, HttpBackendOptions options, LabelSet labels);

  const std::string& backend_id() const override { return id_; }
  const HttpBackendOptions& options() const noexcept { return options_; }

  std::vector<Judgment> annotate_paths(const QueryDocumentPair& pair, int paths, std::uint64_t seed,
                                       const AnnotationContext& context) const override;

  static Json request_body(const QueryDocumentPair& pair, int paths, int label_cardinality,
                           const AnnotationContext& context);
  // Throws InputError describing the first schema violation.
  static std::vector<Judgment> parse_response(const Json& body, int paths, const LabelSet& labels,
                                              const std::string& backend_id);

 private:
  std::string id_;
  HttpBackendOptions options_;
  LabelSet labels_;
  std::string scheme_host_port_;
  std::string path_;
  mutable std::counting_semaphore<1024> in_flight_;
};

struct InnerAgreementResult {
  std::string backend_id;
  std::string query_id;
  std::string doc_id;
  std::optional<int> stable_label;
  std::vector<Judgment> paths;
  std::vector<Judgment> supporting_paths;  // paths voting for stable_label
  std::map<int, int> vote_counts;
};

// Strict plurality over R paths; a tie for first place leaves stable_label empty.
InnerAgreementResult inner_agreement(const AnnotatorBackend& backend, const QueryDocumentPair& pair, int paths,
                                     std::uint64_t seed, const AnnotationContext& context = {});

struct ConsensusAnnotation {
  std::string query_id;
  std::string doc_id;
  int label = 0;
  std::string consolidated_rationale;
  std::vector<std::string> backend_ids;
  int iteration = 1;
};

Json to_json(const ConsensusAnnotation& a);

// Emits an annotation iff every backend has a stable label and all agree.
// Throws InputError on duplicate backend ids or results for different pairs.
std::optional<ConsensusAnnotation> inter_agreement(const std::vector<InnerAgreementResult>& results,
                                                   int iteration = 1);

// Header naming the label, then the distinct rationales in input order.
// Throws InputError on an empty list or mixed labels.
std::string consolidate_rationales(const std::vector<Judgment>& paths);

enum class RejectionReason { Tie, CrossBackendDisagreement, BackendFailure };
std::string_view to_string(RejectionReason r);

struct Rejection {
  std::string query_id;
  std::string doc_id;
  RejectionReason reason = RejectionReason::Tie;
  int iteration = 1;
};

Json to_json(const Rejection& r);

struct AnnotationBatch {
  std::vector<ConsensusAnnotation> annotations;
  std::vector<Rejection> rejections;
  bool non_production = false;  // fewer than two backends
};

/// Inner agreement per backend per candidate, then inter agreement. Output and
/// rejection log are sorted by (query_id, doc_id). Throws ConfigError without
/// backends; BackendUnreachable propagates so the caller can abort.
AnnotationBatch annotate_batch(const std::vector<MinedCandidate>& candidates,
                               const std::vector<std::shared_ptr<const AnnotatorBackend>>& backends, int paths,
                               std::uint64_t seed, int iteration = 1, std::size_t workers = 1);

}  // namespace serm
