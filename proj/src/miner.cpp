#include "serm/miner.hpp"

#include <algorithm>
#include <cmath>

#include "serm/errors.hpp"
#include "serm/logging.hpp"
#include "serm/parallel.hpp"
#include "serm/random.hpp"
#include "serm/strict_json.hpp"

namespace serm {

std::string_view to_string(Agent a) {
  switch (a) {
    case Agent::UserFeedback: return "user_feedback";
    case Agent::ClickModelFeedback: return "click_model_feedback";
    case Agent::Disagreement: return "disagreement";
    case Agent::Uncertainty: return "uncertainty";
  }
  return "user_feedback";
}

Agent parse_agent(std::string_view name) {
  for (Agent a : kAllAgents)
    if (to_string(a) == name) return a;
  throw InputError("unknown agent '" + std::string(name) + "'");
}

void MinerConfig::validate(const LabelSet& labels) const {
  auto check = [](bool ok, const char* field, const char* msg) {
    if (!ok) throw ConfigError(msg, std::string("miner.") + field);
  };
  check(tau_u >= 0.0, "tau_u", "must be >= 0");
  check(tau_c > 0.0 && tau_c < 1.0, "tau_c", "must be in (0, 1)");
  check(tau_cm > 0.0 && tau_cm < 1.0, "tau_cm", "must be in (0, 1)");
  check(tau_md >= 0.0 && tau_md <= labels.max_label(), "tau_md", "must be in [0, cardinality - 1]");
  check(tau_mu >= 0.0 && tau_mu <= std::log(static_cast<double>(labels.cardinality())), "tau_mu",
        "must be in [0, ln(cardinality)]");
  check(n >= 1, "n", "must be >= 1");
  check(k >= 2, "k", "must be >= 2");
  check(temperature > 0.0, "temperature", "must be positive");
}

Json to_json(const MinerConfig& c) {
  return Json{{"tau_u", c.tau_u},   {"tau_c", c.tau_c}, {"tau_cm", c.tau_cm},
              {"tau_md", c.tau_md}, {"tau_mu", c.tau_mu}, {"n", c.n},
              {"k", c.k},           {"temperature", c.temperature}, {"seed", c.seed}};
}

MinerConfig miner_config_from_json(const Json& j, const LabelSet& labels) {
  MinerConfig c;
  StrictReader r(j, "miner");
  r.optional("tau_u", c.tau_u);
  r.optional("tau_c", c.tau_c);
  r.optional("tau_cm", c.tau_cm);
  r.optional("tau_md", c.tau_md);
  r.optional("tau_mu", c.tau_mu);
  r.optional("n", c.n);
  r.optional("k", c.k);
  r.optional("temperature", c.temperature);
  r.optional("seed", c.seed);
  r.finish();
  c.validate(labels);
  return c;
}

Json to_json(const MinedCandidate& c) {
  std::vector<std::string> agents;
  for (Agent a : c.fired_agents) agents.emplace_back(to_string(a));
  return Json{{"query_id", c.pair.query.id},
              {"doc_id", c.pair.document.id},
              {"fired_agents", agents},
              {"signals",
               {{"score_f", c.signals.score_f},
                {"click_prob", c.signals.click_prob},
                {"md", c.signals.md},
                {"mu", c.signals.mu},
                {"engagement_u", c.signals.engagement_u}}},
              {"iteration", c.mined_iteration}};
}

double engagement_metric(const QueryDocumentPair& pair) {
  if (pair.interactions.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : pair.interactions) total += r.dwell_seconds;
  return total / static_cast<double>(pair.interactions.size());
}

bool any_click(const QueryDocumentPair& pair) {
  return std::any_of(pair.interactions.begin(), pair.interactions.end(),
                     [](const InteractionRecord& r) { return r.clicked; });
}

bool user_feedback_fires(bool clicked, double engagement_u, double score_f, const MinerConfig& config) {
  return (clicked || engagement_u > config.tau_u) && score_f < config.tau_c;
}

AgentDecision user_feedback_agent(const QueryDocumentPair& pair, const RelevanceModel& model,
                                  const MinerConfig& config) {
  AgentDecision d;
  d.signals.score_f = expected_score(model.label_distribution(pair)).normalized;
  d.signals.engagement_u = engagement_metric(pair);
  d.fired = user_feedback_fires(any_click(pair), d.signals.engagement_u, d.signals.score_f, config);
  return d;
}

AgentDecision click_model_feedback_agent(const QueryDocumentPair& pair, const RelevanceModel& model,
                                         const ClickModel& click_model, const MinerConfig& config) {
  if (!click_model.fitted()) throw StateError("click model is not fitted");
  AgentDecision d;
  d.signals.click_prob = click_model.probability(pair);
  d.signals.score_f = expected_score(model.label_distribution(pair)).normalized;
  d.signals.engagement_u = engagement_metric(pair);
  const bool synthetic_click = d.signals.click_prob > config.tau_cm;
  d.fired = synthetic_click && user_feedback_fires(true, d.signals.engagement_u, d.signals.score_f, config);
  return d;
}

int model_disagreement(const QueryDocumentPair& pair, const RelevanceModel& model, int k, double temperature,
                       std::uint64_t seed) {
  if (k < 2) throw InputError("model_disagreement needs K >= 2");
  const auto judgments = model.sample_judgments(pair, k, temperature, seed);
  const auto [lo, hi] = std::minmax_element(judgments.begin(), judgments.end(),
                                            [](const Judgment& a, const Judgment& b) { return a.label < b.label; });
  return hi->label - lo->label;
}

double model_uncertainty(const LabelDistribution& dist) { return entropy(dist.probs()); }

std::uint64_t disagreement_seed(const MinerConfig& config, const QueryDocumentPair& pair) {
  return derive_seed(config.seed, "disagreement", pair.query.id, pair.document.id);
}

IntrinsicDecision intrinsic_agent(const QueryDocumentPair& pair, const RelevanceModel& model,
                                  const MinerConfig& config) {
  IntrinsicDecision d;
  const auto dist = model.label_distribution(pair);
  d.signals.score_f = expected_score(dist).normalized;
  d.signals.mu = model_uncertainty(dist);
  d.signals.md = model_disagreement(pair, model, config.k, config.temperature, disagreement_seed(config, pair));
  d.signals.engagement_u = engagement_metric(pair);
  d.disagreement = d.signals.md >= config.tau_md;
  d.uncertainty = d.signals.mu >= config.tau_mu;
  d.fired = d.disagreement || d.uncertainty;
  return d;
}

std::vector<MinedCandidate> mine(const std::vector<Query>& queries,
                                 const std::map<std::string, std::vector<Document>>& candidates,
                                 const std::vector<InteractionRecord>& interactions, const RelevanceModel& model,
                                 const ClickModel& click_model, const MinerConfig& config, int iteration,
                                 std::size_t workers) {
  config.validate(model.label_set());
  if (!click_model.fitted()) throw StateError("click model is not fitted");

  std::map<std::pair<std::string, std::string>, std::vector<InteractionRecord>> by_pair;
  for (const auto& r : interactions) by_pair[{r.query_id, r.doc_id}].push_back(r);

  std::vector<std::vector<MinedCandidate>> per_query(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t qi) {
    const Query& q = queries[qi];
    auto cit = candidates.find(q.id);
    if (cit == candidates.end() || cit->second.empty()) {
      log_warning("query " + q.id + " has no candidate documents; skipped");
      return;
    }
    // Doc-id order so sampling does not depend on retrieval order.
    std::vector<const Document*> docs;
    for (const auto& d : cit->second) docs.push_back(&d);
    std::sort(docs.begin(), docs.end(), [](const Document* a, const Document* b) { return a->id < b->id; });

    std::vector<MinedCandidate> evaluated;
    std::map<Agent, std::vector<std::size_t>> qualifying;
    for (const Document* d : docs) {
      QueryDocumentPair pair{q, *d, {}};
      if (auto it = by_pair.find({q.id, d->id}); it != by_pair.end()) pair.interactions = it->second;

      const auto user = user_feedback_agent(pair, model, config);
      const auto clicky = click_model_feedback_agent(pair, model, click_model, config);
      const auto intrinsic = intrinsic_agent(pair, model, config);

      MinedCandidate c{std::move(pair), {}, intrinsic.signals, iteration};
      c.signals.click_prob = clicky.signals.click_prob;
      const std::size_t idx = evaluated.size();
      if (user.fired) qualifying[Agent::UserFeedback].push_back(idx);
      if (clicky.fired) qualifying[Agent::ClickModelFeedback].push_back(idx);
      if (intrinsic.disagreement) qualifying[Agent::Disagreement].push_back(idx);
      if (intrinsic.uncertainty) qualifying[Agent::Uncertainty].push_back(idx);
      evaluated.push_back(std::move(c));
    }

    for (const auto& [agent, idxs] : qualifying) {
      std::vector<std::size_t> chosen = idxs;
      if (idxs.size() > static_cast<std::size_t>(config.n)) {
        Rng rng(derive_seed(config.seed, "sample", q.id, to_string(agent)));
        chosen.clear();
        for (auto pos : rng.sample_without_replacement(idxs.size(), static_cast<std::size_t>(config.n)))
          chosen.push_back(idxs[pos]);
      }
      for (auto i : chosen) evaluated[i].fired_agents.insert(agent);
    }
    for (auto& c : evaluated) {
      if (!c.fired_agents.empty()) per_query[qi].push_back(std::move(c));
    }
  });

  std::vector<MinedCandidate> out;
  for (auto& v : per_query)
    for (auto& c : v) out.push_back(std::move(c));
  std::sort(out.begin(), out.end(), [](const MinedCandidate& a, const MinedCandidate& b) {
    return std::tie(a.pair.query.id, a.pair.document.id) < std::tie(b.pair.query.id, b.pair.document.id);
  });
  return out;
}

}  // namespace serm
