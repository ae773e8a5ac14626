#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "serm/core.hpp"
#include "serm/features.hpp"
#include "serm/math.hpp"

namespace serm {

inline constexpr double kProbabilityFloor = 1e-9;
inline constexpr double kMinSamplingTemperature = 1e-6;

/// Pluggable relevance model: a belief Pr(y | q, d) over graded labels, from
/// which scores, sampled judgments and pseudo-labels are derived.
class RelevanceModel {
 public:
  virtual ~RelevanceModel() = default;

  virtual const LabelSet& label_set() const = 0;
  virtual const std::string& version() const = 0;

  // Always a valid distribution with every entry >= kProbabilityFloor.
  virtual LabelDistribution label_distribution(const QueryDocumentPair& pair) const = 0;

  // K independent draws from the temperature-scaled distribution.
  virtual std::vector<Judgment> sample_judgments(const QueryDocumentPair& pair, int k,
                                                 double temperature, std::uint64_t seed) const = 0;

  // Templated explanation for the model's own argmax judgment.
  virtual std::string rationale(const QueryDocumentPair& pair) const = 0;
};

struct ExpectedScore {
  double raw;         // sum_y y * Pr(y)
  double normalized;  // raw / (cardinality - 1), in [0, 1]
};

ExpectedScore expected_score(const LabelDistribution& dist);

struct TrainOptions {
  int epochs = 300;
  double learning_rate = 2.0;
};

/// Multinomial-logistic reference model: Pr(y | x) = softmax(W x / T)_y over
/// lexical features x, with a probability floor applied to outputs.
class ReferenceModel final : public RelevanceModel {
 public:
  ReferenceModel(LabelSet labels, std::shared_ptr<const FeatureExtractor> extractor,
                 int feature_dim = FeatureExtractor::kFeatureDim, double temperature = 1.0);

  // Small seeded Gaussian weights (std `scale`).
  static ReferenceModel initialized(LabelSet labels, std::shared_ptr<const FeatureExtractor> extractor,
                                    std::uint64_t seed, int feature_dim = FeatureExtractor::kFeatureDim,
                                    double scale = 0.01);

  const LabelSet& label_set() const override { return labels_; }
  const std::string& version() const override { return version_; }
  void set_version(std::string v) { version_ = std::move(v); }

  int feature_dim() const noexcept { return static_cast<int>(weights_.cols()); }
  double temperature() const noexcept { return temperature_; }
  const Matrix& weights() const noexcept { return weights_; }
  void set_weights(const Matrix& w);
  const std::shared_ptr<const FeatureExtractor>& extractor() const noexcept { return extractor_; }

  // Feature prefix of length feature_dim(). Throws InputError on empty query text.
  Vector features(const QueryDocumentPair& pair) const;
  RowMatrix feature_matrix(const std::vector<const QueryDocumentPair*>& pairs) const;

  Vector logits(const Vector& x) const { return weights_ * x / temperature_; }
  LabelDistribution distribution_from_features(const Vector& x) const;

  LabelDistribution label_distribution(const QueryDocumentPair& pair) const override;
  std::vector<Judgment> sample_judgments(const QueryDocumentPair& pair, int k, double temperature,
                                         std::uint64_t seed) const override;
  std::string rationale(const QueryDocumentPair& pair) const override;

  Json to_json() const;
  static ReferenceModel from_json(const Json& j, std::shared_ptr<const FeatureExtractor> extractor);

 private:
  std::string rationale_for(const Vector& x, int label) const;

  LabelSet labels_;
  std::shared_ptr<const FeatureExtractor> extractor_;
  Matrix weights_;  // cardinality x feature_dim
  double temperature_;
  std::string version_ = "init";
};

// ---------------------------------------------------------------------------
// Objectives. Each returns the mean loss and, when `grad` is non-null, writes
// dL/dW (same shape as W). Logits are W x / temperature.

// Mean -log softmax(W x_i / T)_{y_i}.
double generative_loss(const Matrix& w, const RowMatrix& x, const std::vector<int>& labels,
                       double temperature, Matrix* grad);

// Mean -log sigmoid(f(x_relevant) - f(x_nonrelevant)), f = unnormalized expected score.
double pairwise_loss(const Matrix& w, const RowMatrix& x_nonrelevant, const RowMatrix& x_relevant,
                     double temperature, Matrix* grad);

// Mean KL(teacher_i || softmax(W x_i / T)); teacher rows are distributions.
double distillation_loss(const Matrix& w, const RowMatrix& x, const Matrix& teacher_probs,
                         double temperature, Matrix* grad);

using Objective = std::function<double(const Matrix&, Matrix*)>;

// Full-batch gradient descent. A step that raises the loss is rejected and the
// learning rate halved (persistently), so the returned trace of accepted
// losses is non-increasing. Throws TrainingDivergence on a non-finite loss.
std::vector<double> gradient_descent(Matrix& w, const Objective& objective, const TrainOptions& options);

// Fits on (pair, label) records. Throws InputError on an empty dataset.
std::vector<double> fit_generative(ReferenceModel& model, const Dataset& data, const TrainOptions& options);

struct PairwiseTriple {
  Query query;
  Document nonrelevant;
  Document relevant;
};

std::vector<double> fit_pairwise(ReferenceModel& model, const std::vector<PairwiseTriple>& triples,
                                 const TrainOptions& options);

struct DistillResult {
  ReferenceModel student;
  std::vector<double> loss_trace;
};

// Student uses the first `student_feature_dim` features of the extractor and is
// initialized from `seed`. Teacher outputs carry the probability floor.
DistillResult distill(const RelevanceModel& teacher, std::shared_ptr<const FeatureExtractor> extractor,
                      int student_feature_dim, const Dataset& data, const TrainOptions& options,
                      std::uint64_t seed);

// Mean KL(teacher || student) over the dataset's pairs.
double mean_kl(const RelevanceModel& teacher, const RelevanceModel& student, const Dataset& data);

}  // namespace serm
