#include "serm/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "serm/errors.hpp"
#include "serm/hash.hpp"
#include "serm/jsonl.hpp"

namespace serm {

LabelSet::LabelSet(int cardinality) : cardinality_(cardinality) {
  if (cardinality < 2) throw ConfigError("label cardinality must be >= 2");
}

std::string_view to_string(LanguageFamily family) {
  switch (family) {
    case LanguageFamily::Germanic: return "Germanic";
    case LanguageFamily::Romance: return "Romance";
    case LanguageFamily::Minor: return "Minor";
  }
  return "Minor";
}

LanguageFamily parse_language_family(std::string_view name) {
  if (name == "Germanic") return LanguageFamily::Germanic;
  if (name == "Romance") return LanguageFamily::Romance;
  if (name == "Minor") return LanguageFamily::Minor;
  throw InputError("unknown language family '" + std::string(name) + "'");
}

void validate(const Query& q) {
  if (q.id.empty()) throw InputError("query id is empty");
  if (q.text.empty()) throw InputError("query " + q.id + " has empty text");
  if (q.arrival_iteration < 0) throw InputError("query " + q.id + " has negative arrival_iteration");
}

void validate(const Document& d) {
  if (d.id.empty()) throw InputError("document id is empty");
  if (d.title.empty() && d.summary.empty())
    throw InputError("document " + d.id + " has neither title nor summary");
}

void validate(const InteractionRecord& r) {
  if (!(r.dwell_seconds >= 0.0) || !std::isfinite(r.dwell_seconds))
    throw InputError("interaction " + r.query_id + "/" + r.doc_id + " has invalid dwell");
  if (!r.clicked && r.dwell_seconds != 0.0)
    throw InputError("interaction " + r.query_id + "/" + r.doc_id + " has dwell without click");
  if (r.impression_rank < 1)
    throw InputError("interaction " + r.query_id + "/" + r.doc_id + " has rank < 1");
}

void validate(const QueryDocumentPair& p) {
  validate(p.query);
  validate(p.document);
  for (const auto& r : p.interactions) {
    validate(r);
    if (r.query_id != p.query.id || r.doc_id != p.document.id)
      throw InputError("interaction " + r.query_id + "/" + r.doc_id + " attached to pair " +
                       p.query.id + "/" + p.document.id);
  }
}

LabelDistribution::LabelDistribution(Eigen::VectorXd probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) throw InputError("label distribution needs at least two entries");
  for (Eigen::Index i = 0; i < probs_.size(); ++i) {
    if (!std::isfinite(probs_(i)) || probs_(i) < 0.0)
      throw InputError("label distribution has a negative or non-finite entry");
  }
  if (std::abs(probs_.sum() - 1.0) > kSumTolerance)
    throw InputError("label distribution does not sum to 1");
}

LabelDistribution LabelDistribution::uniform(int cardinality) {
  return LabelDistribution(Eigen::VectorXd::Constant(cardinality, 1.0 / cardinality));
}

LabelDistribution LabelDistribution::point_mass(int cardinality, int label) {
  if (label < 0 || label >= cardinality) throw InputError("point mass label out of range");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(cardinality);
  p(label) = 1.0;
  return LabelDistribution(std::move(p));
}

int LabelDistribution::argmax() const {
  int best = 0;
  for (int y = 1; y < cardinality(); ++y) {
    if (probs_(y) > probs_(best)) best = y;
  }
  return best;
}

Provenance Provenance::serm(int k) {
  if (k < 1) throw InputError("generated data must have iteration >= 1");
  return {Kind::SERM, k};
}

Provenance Provenance::self_training(int k) {
  if (k < 1) throw InputError("generated data must have iteration >= 1");
  return {Kind::SelfTraining, k};
}

std::string_view to_string(Provenance::Kind kind) {
  switch (kind) {
    case Provenance::Kind::SFT: return "sft";
    case Provenance::Kind::SERM: return "serm";
    case Provenance::Kind::SelfTraining: return "self_training";
  }
  return "sft";
}

Provenance::Kind parse_provenance_kind(std::string_view name) {
  if (name == "sft") return Provenance::Kind::SFT;
  if (name == "serm") return Provenance::Kind::SERM;
  if (name == "self_training") return Provenance::Kind::SelfTraining;
  throw InputError("unknown provenance kind '" + std::string(name) + "'");
}

Dataset::Dataset(LabelSet labels, std::vector<LabeledPair> records)
    : labels_(labels), records_(std::move(records)) {
  std::set<std::tuple<std::string, std::string, int, int>> seen;
  for (const auto& r : records_) {
    if (!labels_.contains(r.label))
      throw InputError("label " + std::to_string(r.label) + " outside label set for " +
                       r.pair.query.id + "/" + r.pair.document.id);
    if (r.provenance.kind != Provenance::Kind::SFT && r.provenance.iteration < 1)
      throw InputError("generated record with iteration < 1");
    auto key = std::make_tuple(r.pair.query.id, r.pair.document.id,
                               static_cast<int>(r.provenance.kind), r.provenance.iteration);
    if (!seen.insert(std::move(key)).second)
      throw InputError("duplicate record " + r.pair.query.id + "/" + r.pair.document.id);
  }
  hash_ = sha256_hex(canonical_jsonl());
}

std::string Dataset::canonical_jsonl() const {
  std::string out;
  for (const auto& r : records_) {
    out += canonical_dump(to_json(r));
    out += '\n';
  }
  return out;
}

Dataset dataset_merge(const std::vector<Dataset>& parts) {
  if (parts.empty()) return Dataset{};
  const LabelSet labels = parts.front().label_set();
  std::map<std::pair<std::string, std::string>, const LabeledPair*> latest;
  for (const auto& part : parts) {
    if (!(part.label_set() == labels))
      throw ConfigError("cannot merge datasets with different label cardinalities");
    for (const auto& r : part.records()) {
      auto key = std::make_pair(r.pair.query.id, r.pair.document.id);
      auto [it, inserted] = latest.try_emplace(key, &r);
      if (!inserted && r.provenance.iteration >= it->second->provenance.iteration) it->second = &r;
    }
  }
  std::vector<LabeledPair> merged;
  merged.reserve(latest.size());
  for (const auto& [key, rec] : latest) merged.push_back(*rec);
  return Dataset(labels, std::move(merged));
}

std::string canonical_dump(const Json& j) {
  return j.dump(-1, ' ', false, Json::error_handler_t::strict);
}

Json to_json(const Query& q) {
  return Json{{"id", q.id},
              {"text", q.text},
              {"language_family", std::string(to_string(q.language_family))},
              {"arrival_iteration", q.arrival_iteration}};
}

Json to_json(const Document& d) {
  return Json{{"id", d.id}, {"title", d.title}, {"hashtags", d.hashtags}, {"summary", d.summary}};
}

Json to_json(const InteractionRecord& r) {
  return Json{{"query_id", r.query_id},
              {"doc_id", r.doc_id},
              {"clicked", r.clicked},
              {"dwell_seconds", r.dwell_seconds},
              {"impression_rank", r.impression_rank}};
}

Json to_json(const LabeledPair& r) {
  return Json{{"query_id", r.pair.query.id},
              {"doc_id", r.pair.document.id},
              {"label", r.label},
              {"rationale", r.rationale},
              {"provenance",
               {{"kind", std::string(to_string(r.provenance.kind))},
                {"iteration", r.provenance.iteration}}}};
}

namespace {

template <typename T>
T field(const Json& j, const char* key) {
  if (!j.is_object()) throw InputError("record is not a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw InputError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InputError(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

Query query_from_json(const Json& j) {
  Query q{field<std::string>(j, "id"), field<std::string>(j, "text"),
          parse_language_family(field<std::string>(j, "language_family")),
          field<int>(j, "arrival_iteration")};
  validate(q);
  return q;
}

Document document_from_json(const Json& j) {
  Document d{field<std::string>(j, "id"), field<std::string>(j, "title"),
             field<std::vector<std::string>>(j, "hashtags"), field<std::string>(j, "summary")};
  validate(d);
  return d;
}

InteractionRecord interaction_from_json(const Json& j) {
  InteractionRecord r{field<std::string>(j, "query_id"), field<std::string>(j, "doc_id"),
                      field<bool>(j, "clicked"), field<double>(j, "dwell_seconds"),
                      field<int>(j, "impression_rank")};
  validate(r);
  return r;
}

LabeledRecordRef labeled_from_json(const Json& j) {
  const Json prov = field<Json>(j, "provenance");
  return LabeledRecordRef{field<std::string>(j, "query_id"), field<std::string>(j, "doc_id"),
                          field<int>(j, "label"), field<std::string>(j, "rationale"),
                          Provenance{parse_provenance_kind(field<std::string>(prov, "kind")),
                                     field<int>(prov, "iteration")}};
}

}  // namespace serm
