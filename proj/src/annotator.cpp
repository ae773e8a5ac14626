#include "serm/annotator.hpp"

#include <algorithm>
#include <set>

#include "httplib.h"
#include "serm/errors.hpp"
#include "serm/parallel.hpp"
#include "serm/random.hpp"

namespace serm {

AnnotationContext context_from(const MinedCandidate& c) {
  AnnotationContext ctx;
  const auto& inter = c.pair.interactions;
  if (!inter.empty()) {
    const auto clicks = std::count_if(inter.begin(), inter.end(), [](const auto& r) { return r.clicked; });
    ctx.ctr = static_cast<double>(clicks) / static_cast<double>(inter.size());
  }
  ctx.dwell_time = c.signals.engagement_u;
  ctx.cm_score = c.signals.click_prob;
  ctx.model_score = c.signals.score_f;
  ctx.disagreement_score = c.signals.md;
  ctx.uncertainty = c.signals.mu;
  return ctx;
}

// ---------------------------------------------------------------------------

MockOracleBackend::MockOracleBackend(std::string backend_id, std::shared_ptr<const GroundTruth> truth,
                                     LabelSet labels, double path_error_rate, std::uint64_t seed)
    : id_(std::move(backend_id)), truth_(std::move(truth)), labels_(labels), error_rate_(path_error_rate), seed_(seed) {
  if (id_.empty()) throw ConfigError("backend id is empty");
  if (!truth_) throw ConfigError("mock backend needs ground truth", id_);
  if (!(path_error_rate >= 0.0 && path_error_rate < 0.5))
    throw ConfigError("path_error_rate must be in [0, 0.5)", id_);
}

std::vector<Judgment> MockOracleBackend::annotate_paths(const QueryDocumentPair& pair, int paths,
                                                        std::uint64_t seed, const AnnotationContext&) const {
  const auto truth = truth_->find(pair.query.id, pair.document.id);
  if (!truth) throw BackendError(id_, "no oracle label for " + pair.query.id + "/" + pair.document.id);
  Rng rng(derive_seed(seed_, seed, id_, pair.query.id, pair.document.id));
  std::vector<Judgment> out;
  out.reserve(static_cast<std::size_t>(paths));
  for (int i = 0; i < paths; ++i) {
    int label = *truth;
    if (rng.bernoulli(error_rate_)) {
      label = static_cast<int>(rng.index(static_cast<std::size_t>(labels_.max_label())));
      if (label >= *truth) ++label;
    }
    out.push_back({label, "path " + std::to_string(i + 1) + ": oracle judged grade " + std::to_string(label),
                   JudgmentSource::AnnotatorPath, id_});
  }
  return out;
}

// ---------------------------------------------------------------------------

HttpBackend::HttpBackend(std::string backend_id, HttpBackendOptions options, LabelSet labels)
    : id_(std::move(backend_id)),
      options_(std::move(options)),
      labels_(labels),
      in_flight_(std::clamp(options_.max_in_flight, 1, 1024)) {
  if (id_.empty()) throw ConfigError("backend id is empty");
  const std::string& url = options_.endpoint;
  const auto scheme_end = url.find("://");
  if (url.empty() || scheme_end == std::string::npos)
    throw ConfigError("endpoint must look like http://host:port/path", id_);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (options_.timeout_seconds <= 0.0) throw ConfigError("timeout must be positive", id_);
  if (options_.max_retries < 0) throw ConfigError("max_retries must be >= 0", id_);
}

Json HttpBackend::request_body(const QueryDocumentPair& pair, int paths, int label_cardinality,
                               const AnnotationContext& c) {
  return Json{{"query", to_json(pair.query)},
              {"document", to_json(pair.document)},
              {"context",
               {{"ctr", c.ctr},
                {"dwell_time", c.dwell_time},
                {"cm_score", c.cm_score},
                {"model_score", c.model_score},
                {"disagreement_score", c.disagreement_score},
                {"uncertainty", c.uncertainty}}},
              {"num_paths", paths},
              {"label_cardinality", label_cardinality}};
}

std::vector<Judgment> HttpBackend::parse_response(const Json& body, int paths, const LabelSet& labels,
                                                  const std::string& backend_id) {
  if (!body.is_object() || !body.contains("paths") || !body["paths"].is_array())
    throw InputError("response has no 'paths' array");
  const auto& arr = body["paths"];
  if (arr.size() != static_cast<std::size_t>(paths))
    throw InputError("expected " + std::to_string(paths) + " paths, got " + std::to_string(arr.size()));
  std::vector<Judgment> out;
  for (const auto& p : arr) {
    if (!p.is_object()) throw InputError("path entry is not an object");
    if (!p.contains("rationale") || !p["rationale"].is_string() || p["rationale"].get<std::string>().empty())
      throw InputError("path entry needs a non-empty string 'rationale'");
    if (!p.contains("score") || !p["score"].is_number_integer()) throw InputError("path entry needs an integer 'score'");
    const auto score = p["score"].get<long long>();
    if (score < 0 || score > labels.max_label()) throw InputError("score out of label range");
    out.push_back({static_cast<int>(score), p["rationale"].get<std::string>(), JudgmentSource::AnnotatorPath,
                   backend_id});
  }
  return out;
}

std::vector<Judgment> HttpBackend::annotate_paths(const QueryDocumentPair& pair, int paths, std::uint64_t,
                                                  const AnnotationContext& context) const {
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  const std::string body = request_body(pair, paths, labels_.cardinality(), context).dump();
  httplib::Client client(scheme_host_port_);
  const auto secs = static_cast<time_t>(options_.timeout_seconds);
  const auto usecs = static_cast<time_t>((options_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  std::string last_error;
  bool transport_failure = false;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    auto res = client.Post(path_, body, "application/json");
    if (!res) {
      transport_failure = true;
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    transport_failure = false;
    if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    try {
      return parse_response(Json::parse(res->body), paths, labels_, id_);
    } catch (const Json::parse_error& e) {
      last_error = std::string("invalid JSON: ") + e.what();
    } catch (const InputError& e) {
      last_error = std::string("schema violation: ") + e.what();
    }
  }
  if (transport_failure) throw BackendUnreachable(id_, last_error);
  throw BackendError(id_, last_error);
}

// ---------------------------------------------------------------------------

InnerAgreementResult inner_agreement(const AnnotatorBackend& backend, const QueryDocumentPair& pair, int paths,
                                     std::uint64_t seed, const AnnotationContext& context) {
  if (paths < 1) throw InputError("inner_agreement needs at least one path");
  InnerAgreementResult r;
  r.backend_id = backend.backend_id();
  r.query_id = pair.query.id;
  r.doc_id = pair.document.id;
  r.paths = backend.annotate_paths(pair, paths, seed, context);
  if (r.paths.size() != static_cast<std::size_t>(paths))
    throw BackendError(r.backend_id, "returned " + std::to_string(r.paths.size()) + " paths, expected " +
                                         std::to_string(paths));
  for (const auto& j : r.paths) {
    if (j.rationale.empty()) throw BackendError(r.backend_id, "returned an empty rationale");
    ++r.vote_counts[j.label];
  }
  int best = -1, best_count = 0;
  bool tie = false;
  for (const auto& [label, count] : r.vote_counts) {
    if (count > best_count) {
      best = label;
      best_count = count;
      tie = false;
    } else if (count == best_count) {
      tie = true;
    }
  }
  if (!tie) {
    r.stable_label = best;
    for (const auto& j : r.paths)
      if (j.label == best) r.supporting_paths.push_back(j);
  }
  return r;
}

std::string consolidate_rationales(const std::vector<Judgment>& paths) {
  if (paths.empty()) throw InputError("consolidate_rationales needs at least one path");
  const int label = paths.front().label;
  for (const auto& p : paths)
    if (p.label != label) throw InputError("consolidate_rationales got paths with different labels");
  std::string out = "Consensus label " + std::to_string(label) + ":";
  std::set<std::string> seen;
  for (const auto& p : paths) {
    if (!seen.insert(p.rationale).second) continue;
    out += "\n- ";
    if (!p.backend_id.empty()) out += "[" + p.backend_id + "] ";
    out += p.rationale;
  }
  return out;
}

std::optional<ConsensusAnnotation> inter_agreement(const std::vector<InnerAgreementResult>& results,
                                                   int iteration) {
  if (results.empty()) throw InputError("inter_agreement needs at least one result");
  std::set<std::string> ids;
  for (const auto& r : results) {
    if (!ids.insert(r.backend_id).second) throw InputError("duplicate backend id " + r.backend_id);
    if (r.query_id != results.front().query_id || r.doc_id != results.front().doc_id)
      throw InputError("inter_agreement got results for different pairs");
  }
  const auto& first = results.front();
  if (!first.stable_label) return std::nullopt;
  for (const auto& r : results)
    if (r.stable_label != first.stable_label) return std::nullopt;

  ConsensusAnnotation a;
  a.query_id = first.query_id;
  a.doc_id = first.doc_id;
  a.label = *first.stable_label;
  a.iteration = iteration;
  std::vector<Judgment> support;
  for (const auto& r : results) {
    a.backend_ids.push_back(r.backend_id);
    support.insert(support.end(), r.supporting_paths.begin(), r.supporting_paths.end());
  }
  a.consolidated_rationale = consolidate_rationales(support);
  return a;
}

Json to_json(const ConsensusAnnotation& a) {
  return Json{{"query_id", a.query_id},       {"doc_id", a.doc_id},
              {"label", a.label},             {"rationale", a.consolidated_rationale},
              {"backend_ids", a.backend_ids}, {"iteration", a.iteration}};
}

std::string_view to_string(RejectionReason r) {
  switch (r) {
    case RejectionReason::Tie: return "tie";
    case RejectionReason::CrossBackendDisagreement: return "cross_backend_disagreement";
    case RejectionReason::BackendFailure: return "backend_failure";
  }
  return "tie";
}

Json to_json(const Rejection& r) {
  return Json{{"query_id", r.query_id},
              {"doc_id", r.doc_id},
              {"reason", std::string(to_string(r.reason))},
              {"iteration", r.iteration}};
}

AnnotationBatch annotate_batch(const std::vector<MinedCandidate>& candidates,
                               const std::vector<std::shared_ptr<const AnnotatorBackend>>& backends, int paths,
                               std::uint64_t seed, int iteration, std::size_t workers) {
  if (backends.empty()) throw ConfigError("annotate_batch needs at least one backend", "annotator.backends");
  if (paths < 1) throw ConfigError("paths must be >= 1", "annotator.paths");

  struct Outcome {
    std::optional<ConsensusAnnotation> annotation;
    std::optional<RejectionReason> reason;
  };
  std::vector<Outcome> outcomes(candidates.size());
  parallel_for(candidates.size(), workers, [&](std::size_t i) {
    const auto& c = candidates[i];
    const auto ctx = context_from(c);
    const std::uint64_t pair_seed = derive_seed(seed, "annotate", c.pair.query.id, c.pair.document.id);
    std::vector<InnerAgreementResult> results;
    bool failed = false;
    for (const auto& b : backends) {
      try {
        results.push_back(inner_agreement(*b, c.pair, paths, pair_seed, ctx));
      } catch (const BackendUnreachable&) {
        throw;
      } catch (const BackendError&) {
        failed = true;
      }
    }
    if (failed) {
      outcomes[i].reason = RejectionReason::BackendFailure;
      return;
    }
    const bool all_stable =
        std::all_of(results.begin(), results.end(), [](const auto& r) { return r.stable_label.has_value(); });
    outcomes[i].annotation = inter_agreement(results, iteration);
    if (!outcomes[i].annotation)
      outcomes[i].reason = all_stable ? RejectionReason::CrossBackendDisagreement : RejectionReason::Tie;
  });

  AnnotationBatch batch;
  batch.non_production = backends.size() < 2;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (outcomes[i].annotation) {
      batch.annotations.push_back(std::move(*outcomes[i].annotation));
    } else {
      batch.rejections.push_back(
          {candidates[i].pair.query.id, candidates[i].pair.document.id, *outcomes[i].reason, iteration});
    }
  }
  auto key = [](const auto& x) { return std::tie(x.query_id, x.doc_id); };
  std::sort(batch.annotations.begin(), batch.annotations.end(),
            [&](const auto& a, const auto& b) { return key(a) < key(b); });
  std::sort(batch.rejections.begin(), batch.rejections.end(),
            [&](const auto& a, const auto& b) { return key(a) < key(b); });
  return batch;
}

}  // namespace serm
