#include "serm/model.hpp"

#include <cmath>
#include <cstdio>

#include "serm/errors.hpp"
#include "serm/random.hpp"

namespace serm {

ExpectedScore expected_score(const LabelDistribution& dist) {
  double raw = 0.0;
  for (int y = 0; y < dist.cardinality(); ++y) raw += y * dist[y];
  return {raw, raw / (dist.cardinality() - 1)};
}

ReferenceModel::ReferenceModel(LabelSet labels, std::shared_ptr<const FeatureExtractor> extractor,
                               int feature_dim, double temperature)
    : labels_(labels),
      extractor_(std::move(extractor)),
      weights_(Matrix::Zero(labels.cardinality(), feature_dim)),
      temperature_(temperature) {
  if (!extractor_) throw ConfigError("reference model needs a feature extractor");
  if (feature_dim < 1 || feature_dim > FeatureExtractor::kFeatureDim)
    throw ConfigError("feature_dim must be in [1, " + std::to_string(FeatureExtractor::kFeatureDim) + "]");
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ConfigError("model temperature must be positive");
}

ReferenceModel ReferenceModel::initialized(LabelSet labels, std::shared_ptr<const FeatureExtractor> extractor,
                                           std::uint64_t seed, int feature_dim, double scale) {
  ReferenceModel m(labels, std::move(extractor), feature_dim);
  Rng rng(derive_seed(seed, "model-init"));
  Matrix w(labels.cardinality(), feature_dim);
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = scale * rng.normal();
  m.set_weights(w);
  return m;
}

void ReferenceModel::set_weights(const Matrix& w) {
  if (w.rows() != weights_.rows() || w.cols() != weights_.cols())
    throw InputError("weight matrix shape mismatch");
  if (!w.allFinite()) throw InputError("weights must be finite");
  weights_ = w;
}

Vector ReferenceModel::features(const QueryDocumentPair& pair) const {
  if (pair.query.text.empty()) throw InputError("query " + pair.query.id + " has empty text");
  return extractor_->extract(pair.query, pair.document).head(feature_dim());
}

RowMatrix ReferenceModel::feature_matrix(const std::vector<const QueryDocumentPair*>& pairs) const {
  RowMatrix x(static_cast<Eigen::Index>(pairs.size()), feature_dim());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = features(*pairs[i]).transpose();
  return x;
}

LabelDistribution ReferenceModel::distribution_from_features(const Vector& x) const {
  return LabelDistribution(apply_floor(softmax(logits(x)), kProbabilityFloor));
}

LabelDistribution ReferenceModel::label_distribution(const QueryDocumentPair& pair) const {
  return distribution_from_features(features(pair));
}

std::string ReferenceModel::rationale_for(const Vector& x, int label) const {
  // Feature (bias excluded) pushing hardest toward `label`.
  int top = 0;
  double best = -std::numeric_limits<double>::infinity();
  const int usable = std::min(feature_dim(), FeatureExtractor::kFeatureDim - 1);
  for (int j = 0; j < usable; ++j) {
    const double c = weights_(label, j) * x(j);
    if (c > best) {
      best = c;
      top = j;
    }
  }
  const double overlap = feature_dim() > 3 ? x(3) : x(0);
  char buf[128];
  std::snprintf(buf, sizeof buf, "label=%d, overlap=%.2f, top feature=%s", label, overlap,
                std::string(FeatureExtractor::kNames[top]).c_str());
  return buf;
}

std::vector<Judgment> ReferenceModel::sample_judgments(const QueryDocumentPair& pair, int k,
                                                       double temperature, std::uint64_t seed) const {
  if (k <= 0) throw InputError("sample_judgments needs K >= 1");
  if (!(temperature > 0.0)) throw InputError("sampling temperature must be positive");
  const double t = std::max(temperature, kMinSamplingTemperature);
  const Vector x = features(pair);
  const Vector probs = softmax(logits(x) / t);
  Rng rng(seed);
  std::vector<Judgment> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const int label = static_cast<int>(rng.categorical(probs));
    out.push_back({label, rationale_for(x, label), JudgmentSource::Model, {}});
  }
  return out;
}

std::string ReferenceModel::rationale(const QueryDocumentPair& pair) const {
  const Vector x = features(pair);
  return rationale_for(x, distribution_from_features(x).argmax());
}

Json ReferenceModel::to_json() const {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(weights_.size()));
  for (Eigen::Index r = 0; r < weights_.rows(); ++r)
    for (Eigen::Index c = 0; c < weights_.cols(); ++c) flat.push_back(weights_(r, c));
  return Json{{"label_cardinality", labels_.cardinality()},
              {"feature_dim", feature_dim()},
              {"weights", flat},
              {"temperature", temperature_},
              {"version", version_}};
}

ReferenceModel ReferenceModel::from_json(const Json& j, std::shared_ptr<const FeatureExtractor> extractor) {
  try {
    const int card = j.at("label_cardinality").get<int>();
    const int dim = j.at("feature_dim").get<int>();
    const auto flat = j.at("weights").get<std::vector<double>>();
    if (flat.size() != static_cast<std::size_t>(card) * static_cast<std::size_t>(dim))
      throw InputError("checkpoint weights have the wrong length");
    ReferenceModel m(LabelSet(card), std::move(extractor), dim, j.at("temperature").get<double>());
    Matrix w(card, dim);
    for (int r = 0; r < card; ++r)
      for (int c = 0; c < dim; ++c) w(r, c) = flat[static_cast<std::size_t>(r * dim + c)];
    m.set_weights(w);
    m.set_version(j.at("version").get<std::string>());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed model checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

double generative_loss(const Matrix& w, const RowMatrix& x, const std::vector<int>& labels,
                       double temperature, Matrix* grad) {
  const auto n = x.rows();
  const Matrix logits = x * w.transpose() / temperature;  // n x L
  const Matrix logp = log_softmax_rows(logits);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) loss -= logp(i, labels[static_cast<std::size_t>(i)]);
  loss /= static_cast<double>(n);
  if (grad) {
    Matrix residual = logp.array().exp().matrix();
    for (Eigen::Index i = 0; i < n; ++i) residual(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    *grad = residual.transpose() * x / (static_cast<double>(n) * temperature);
  }
  return loss;
}

namespace {

// Per-row expected score f and the (n x L) matrix df/dlogits = p_y (y - f).
void expected_score_rows(const Matrix& w, const RowMatrix& x, double temperature, Vector& f,
                         Matrix& dfdz) {
  const Matrix p = softmax_rows(Matrix(x * w.transpose() / temperature));
  const Vector ys = Vector::LinSpaced(w.rows(), 0.0, static_cast<double>(w.rows() - 1));
  f = p * ys;
  dfdz = p.array() * ((-f).replicate(1, w.rows()).rowwise() + ys.transpose()).array();
}

}  // namespace

double pairwise_loss(const Matrix& w, const RowMatrix& x_nonrelevant, const RowMatrix& x_relevant,
                     double temperature, Matrix* grad) {
  const auto n = x_relevant.rows();
  Vector fa, fb;
  Matrix da, db;
  expected_score_rows(w, x_nonrelevant, temperature, fa, da);
  expected_score_rows(w, x_relevant, temperature, fb, db);
  double loss = 0.0;
  Vector coef(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double delta = fb(i) - fa(i);
    loss -= log_sigmoid(delta);
    coef(i) = -(1.0 - sigmoid(delta));
  }
  loss /= static_cast<double>(n);
  if (grad) {
    const Matrix gb = (db.array().colwise() * coef.array()).matrix().transpose() * x_relevant;
    const Matrix ga = (da.array().colwise() * coef.array()).matrix().transpose() * x_nonrelevant;
    *grad = (gb - ga) / (static_cast<double>(n) * temperature);
  }
  return loss;
}

double distillation_loss(const Matrix& w, const RowMatrix& x, const Matrix& teacher_probs,
                         double temperature, Matrix* grad) {
  const auto n = x.rows();
  const Matrix logp = log_softmax_rows(Matrix(x * w.transpose() / temperature));
  const Matrix& q = teacher_probs;
  const Matrix logq = q.array().max(1e-300).log().matrix();
  const double loss = (q.array() * (logq - logp).array()).sum() / static_cast<double>(n);
  if (grad) {
    *grad = (logp.array().exp().matrix() - q).transpose() * x / (static_cast<double>(n) * temperature);
  }
  return loss;
}

std::vector<double> gradient_descent(Matrix& w, const Objective& objective, const TrainOptions& options) {
  if (options.epochs < 0) throw InputError("epochs must be >= 0");
  if (!(options.learning_rate > 0.0)) throw InputError("learning rate must be positive");
  std::vector<double> trace;
  if (options.epochs == 0) return trace;
  trace.reserve(static_cast<std::size_t>(options.epochs));

  Matrix grad;
  double loss = objective(w, &grad);
  if (!std::isfinite(loss) || !grad.allFinite()) throw TrainingDivergence("initial loss is not finite");
  double lr = options.learning_rate;
  Matrix candidate, candidate_grad;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    bool accepted = false;
    while (lr > 1e-14) {
      candidate = w - lr * grad;
      const double next = objective(candidate, &candidate_grad);
      if (std::isfinite(next) && next <= loss && candidate_grad.allFinite()) {
        w.swap(candidate);
        grad.swap(candidate_grad);
        loss = next;
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (!std::isfinite(loss)) throw TrainingDivergence("loss became non-finite");
    trace.push_back(loss);
    if (!accepted) break;  // step size underflowed: at a stationary point
  }
  return trace;
}

std::vector<double> fit_generative(ReferenceModel& model, const Dataset& data, const TrainOptions& options) {
  if (data.empty()) throw InputError("fit_generative needs a non-empty dataset");
  if (!(data.label_set() == model.label_set())) throw ConfigError("dataset and model label sets differ");
  std::vector<const QueryDocumentPair*> pairs;
  std::vector<int> labels;
  pairs.reserve(data.size());
  labels.reserve(data.size());
  for (const auto& r : data.records()) {
    pairs.push_back(&r.pair);
    labels.push_back(r.label);
  }
  const RowMatrix x = model.feature_matrix(pairs);
  Matrix w = model.weights();
  const double t = model.temperature();
  auto trace = gradient_descent(
      w, [&](const Matrix& cur, Matrix* g) { return generative_loss(cur, x, labels, t, g); }, options);
  model.set_weights(w);
  return trace;
}

std::vector<double> fit_pairwise(ReferenceModel& model, const std::vector<PairwiseTriple>& triples,
                                 const TrainOptions& options) {
  if (triples.empty()) throw InputError("fit_pairwise needs at least one triple");
  std::vector<QueryDocumentPair> a, b;
  a.reserve(triples.size());
  b.reserve(triples.size());
  for (const auto& t : triples) {
    if (t.nonrelevant.id == t.relevant.id)
      throw InputError("triple for query " + t.query.id + " uses document " + t.relevant.id + " twice");
    a.push_back({t.query, t.nonrelevant, {}});
    b.push_back({t.query, t.relevant, {}});
  }
  std::vector<const QueryDocumentPair*> pa, pb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa.push_back(&a[i]);
    pb.push_back(&b[i]);
  }
  const RowMatrix xa = model.feature_matrix(pa);
  const RowMatrix xb = model.feature_matrix(pb);
  Matrix w = model.weights();
  const double t = model.temperature();
  auto trace = gradient_descent(
      w, [&](const Matrix& cur, Matrix* g) { return pairwise_loss(cur, xa, xb, t, g); }, options);
  model.set_weights(w);
  return trace;
}

DistillResult distill(const RelevanceModel& teacher, std::shared_ptr<const FeatureExtractor> extractor,
                      int student_feature_dim, const Dataset& data, const TrainOptions& options,
                      std::uint64_t seed) {
  if (data.empty()) throw InputError("distill needs a non-empty dataset");
  if (const auto* ref = dynamic_cast<const ReferenceModel*>(&teacher)) {
    if (student_feature_dim > ref->feature_dim())
      throw ConfigError("student feature dim exceeds the teacher's");
  }
  ReferenceModel student = ReferenceModel::initialized(teacher.label_set(), std::move(extractor), seed,
                                                       student_feature_dim);
  std::vector<const QueryDocumentPair*> pairs;
  for (const auto& r : data.records()) pairs.push_back(&r.pair);
  const RowMatrix x = student.feature_matrix(pairs);
  Matrix q(x.rows(), teacher.label_set().cardinality());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    q.row(static_cast<Eigen::Index>(i)) = teacher.label_distribution(*pairs[i]).probs().transpose();
  Matrix w = student.weights();
  const double t = student.temperature();
  auto trace = gradient_descent(
      w, [&](const Matrix& cur, Matrix* g) { return distillation_loss(cur, x, q, t, g); }, options);
  student.set_weights(w);
  student.set_version(teacher.version() + "-distilled");
  return {std::move(student), std::move(trace)};
}

double mean_kl(const RelevanceModel& teacher, const RelevanceModel& student, const Dataset& data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : data.records()) {
    total += kl_divergence(teacher.label_distribution(r.pair).probs(),
                           student.label_distribution(r.pair).probs());
  }
  return total / static_cast<double>(data.size());
}

}  // namespace serm
