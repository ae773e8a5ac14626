#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "serm/core.hpp"
#include "serm/model.hpp"
#include "serm/simulator.hpp"

namespace serm {

enum class Agent { UserFeedback, ClickModelFeedback, Disagreement, Uncertainty };

inline constexpr Agent kAllAgents[] = {Agent::UserFeedback, Agent::ClickModelFeedback, Agent::Disagreement,
                                       Agent::Uncertainty};

std::string_view to_string(Agent a);
Agent parse_agent(std::string_view name);

struct MinerConfig {
  double tau_u = 5.0;    // dwell seconds
  double tau_c = 0.4;    // normalized expected score
  double tau_cm = 0.1;   // click-model probability
  double tau_md = 2.0;   // label units
  double tau_mu = 1.0;   // nats
  int n = 4;             // per-agent, per-query cap
  int k = 3;             // judgments sampled for disagreement
  double temperature = 1.0;
  std::uint64_t seed = 0;

  // Ranges depend on the label cardinality. Throws ConfigError("miner.<key>").
  void validate(const LabelSet& labels) const;
};

Json to_json(const MinerConfig& c);
MinerConfig miner_config_from_json(const Json& j, const LabelSet& labels);

struct Signals {
  double score_f = 0.0;
  double click_prob = 0.0;
  double md = 0.0;
  double mu = 0.0;
  double engagement_u = 0.0;
};

struct AgentDecision {
  bool fired = false;
  Signals signals;
};

struct IntrinsicDecision {
  bool fired = false;
  bool disagreement = false;  // md >= tau_md
  bool uncertainty = false;   // mu >= tau_mu
  Signals signals;
};

struct MinedCandidate {
  QueryDocumentPair pair;
  std::set<Agent> fired_agents;
  Signals signals;
  int mined_iteration = 0;
};

Json to_json(const MinedCandidate& c);

// Mean dwell over the pair's impressions; 0 without interactions.
double engagement_metric(const QueryDocumentPair& pair);
bool any_click(const QueryDocumentPair& pair);

// (clicked OR U > tau_u) AND f < tau_c.
bool user_feedback_fires(bool clicked, double engagement_u, double score_f, const MinerConfig& config);

AgentDecision user_feedback_agent(const QueryDocumentPair& pair, const RelevanceModel& model,
                                  const MinerConfig& config);

// When R_cm(pair) > tau_cm the pair is treated as clicked and the user-feedback
// predicate is evaluated. Throws StateError for an unfitted click model.
AgentDecision click_model_feedback_agent(const QueryDocumentPair& pair, const RelevanceModel& model,
                                         const ClickModel& click_model, const MinerConfig& config);

// max_{i,j} |label_i - label_j| over K sampled judgments. Throws InputError when K < 2.
int model_disagreement(const QueryDocumentPair& pair, const RelevanceModel& model, int k, double temperature,
                       std::uint64_t seed);

// Entropy of the label distribution, in nats.
double model_uncertainty(const LabelDistribution& dist);

// Fires when md >= tau_md or mu >= tau_mu.
IntrinsicDecision intrinsic_agent(const QueryDocumentPair& pair, const RelevanceModel& model,
                                  const MinerConfig& config);

// Seed used for the disagreement draws of one pair.
std::uint64_t disagreement_seed(const MinerConfig& config, const QueryDocumentPair& pair);

/// Applies all four agents to every candidate pair; per query and agent keeps
/// at most n qualifying documents (uniform sample from a per-(query, agent)
/// substream), unions the selections with (query, doc) dedup and returns them
/// sorted by (query_id, doc_id). Queries without candidates are skipped with a
/// warning.
std::vector<MinedCandidate> mine(const std::vector<Query>& queries,
                                 const std::map<std::string, std::vector<Document>>& candidates,
                                 const std::vector<InteractionRecord>& interactions, const RelevanceModel& model,
                                 const ClickModel& click_model, const MinerConfig& config, int iteration = 0,
                                 std::size_t workers = 1);

}  // namespace serm
