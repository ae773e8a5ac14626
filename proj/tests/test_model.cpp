#include "doctest.h"

#include <cmath>

#include "serm/errors.hpp"
#include "serm/model.hpp"
#include "support.hpp"

using namespace serm;
using namespace serm::testing;

namespace {

const auto kExtractor = std::make_shared<const FeatureExtractor>();

const std::vector<std::string> kWords = {"river", "stone", "maple", "cloud", "ember", "quartz", "harbor", "willow"};

// Pairs whose overlap features vary with i.
QueryDocumentPair text_pair(Rng& rng, int i) {
  auto pick = [&] { return kWords[rng.index(kWords.size())]; };
  const std::string q = pick() + " " + pick();
  const std::string title = rng.bernoulli(0.5) ? q : pick();
  QueryDocumentPair p = make_pair("q" + std::to_string(i), "d" + std::to_string(i), q, title);
  p.document.summary = pick() + " " + pick() + " " + pick();
  p.document.hashtags = {"#" + pick()};
  return p;
}

Dataset text_dataset(std::uint64_t seed, int n) {
  Rng rng(seed);
  std::vector<LabeledPair> rs;
  for (int i = 0; i < n; ++i) rs.push_back({text_pair(rng, i), static_cast<int>(rng.index(4)), "r", Provenance::sft()});
  return Dataset(LabelSet(4), std::move(rs));
}

}  // namespace

TEST_CASE("expected_score examples") {
  CHECK(expected_score(LabelDistribution::point_mass(4, 0)).normalized == 0.0);
  CHECK(expected_score(LabelDistribution::point_mass(4, 3)).normalized == 1.0);
  const auto u = expected_score(LabelDistribution::uniform(4));
  CHECK(u.raw == 1.5);
  CHECK(u.normalized == 0.5);
}

TEST_CASE("expected_score is monotone under upward mass transfer") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::VectorXd p(4);
    for (int i = 0; i < 4; ++i) p(i) = rng.uniform() + 1e-3;
    p /= p.sum();
    const int from = static_cast<int>(rng.index(3));
    const int to = from + 1 + static_cast<int>(rng.index(static_cast<std::size_t>(3 - from)));
    const double eps = p(from) * (0.1 + 0.8 * rng.uniform());
    Eigen::VectorXd q = p;
    q(from) -= eps;
    q(to) += eps;
    CHECK(expected_score(LabelDistribution(q)).normalized > expected_score(LabelDistribution(p)).normalized);
  }
}

TEST_CASE("label_distribution") {
  const auto pair = make_pair("q", "d", "river stone", "river stone");

  SUBCASE("zero weights give uniform") {
    ReferenceModel m(LabelSet(4), kExtractor);
    const auto d = m.label_distribution(pair);
    for (int y = 0; y < 4; ++y) CHECK(d[y] == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("hand-built weights favor label 3 on full title overlap") {
    ReferenceModel m(LabelSet(4), kExtractor);
    Matrix w = Matrix::Zero(4, FeatureExtractor::kFeatureDim);
    w(3, 0) = 2.0;  // title_overlap
    m.set_weights(w);
    const auto d = m.label_distribution(pair);
    CHECK(d.argmax() == 3);
    const double e = std::exp(2.0);
    const double keep = 1.0 - 4 * kProbabilityFloor;
    CHECK(d[3] == doctest::Approx(keep * e / (3.0 + e) + kProbabilityFloor).epsilon(1e-12));
    CHECK(d[0] == doctest::Approx(keep / (3.0 + e) + kProbabilityFloor).epsilon(1e-12));
  }

  SUBCASE("deterministic") {
    auto m = ReferenceModel::initialized(LabelSet(4), kExtractor, 5, FeatureExtractor::kFeatureDim, 1.0);
    CHECK(m.label_distribution(pair).probs() == m.label_distribution(pair).probs());
  }

  SUBCASE("empty query text") {
    ReferenceModel m(LabelSet(4), kExtractor);
    auto bad = pair;
    bad.query.text.clear();
    CHECK_THROWS_AS(m.label_distribution(bad), InputError);
  }
}

TEST_CASE("label_distribution is valid and floored for every state") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    auto m = ReferenceModel(LabelSet(4), kExtractor);
    m.set_weights(random_weights(rng, 4, FeatureExtractor::kFeatureDim, 40.0));
    const auto d = m.label_distribution(text_pair(rng, trial));
    CHECK(std::abs(d.probs().sum() - 1.0) <= 1e-9);
    CHECK(d.probs().minCoeff() >= kProbabilityFloor);
  }
}

TEST_CASE("temperature scaling preserves argmax") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix w = random_weights(rng, 4, FeatureExtractor::kFeatureDim);
    const auto pair = text_pair(rng, trial);
    ReferenceModel base(LabelSet(4), kExtractor);
    base.set_weights(w);
    for (double t : {0.05, 0.5, 2.0, 10.0}) {
      ReferenceModel hot(LabelSet(4), kExtractor, FeatureExtractor::kFeatureDim, t);
      hot.set_weights(w);
      CHECK(hot.label_distribution(pair).argmax() == base.label_distribution(pair).argmax());
    }
  }
}

TEST_CASE("sample_judgments") {
  const auto pair = make_pair("q", "d", "river stone", "river");
  auto m = ReferenceModel::initialized(LabelSet(4), kExtractor, 9, FeatureExtractor::kFeatureDim, 1.0);

  SUBCASE("greedy limit") {
    const int arg = m.label_distribution(pair).argmax();
    for (const auto& j : m.sample_judgments(pair, 50, 1e-6, 3)) CHECK(j.label == arg);
    for (const auto& j : m.sample_judgments(pair, 50, 1e-12, 3)) CHECK(j.label == arg);
  }

  SUBCASE("reproducible") {
    const auto a = m.sample_judgments(pair, 3, 1.0, 42);
    const auto b = m.sample_judgments(pair, 3, 1.0, 42);
    REQUIRE(a.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(a[i].label == b[i].label);
    for (const auto& j : a) CHECK_FALSE(j.rationale.empty());
  }

  SUBCASE("uniform frequencies") {
    ReferenceModel zero(LabelSet(4), kExtractor);
    std::vector<int> counts(4, 0);
    for (const auto& j : zero.sample_judgments(pair, 10000, 1.0, 1)) ++counts[static_cast<std::size_t>(j.label)];
    for (int c : counts) CHECK(std::abs(c / 10000.0 - 0.25) <= 0.02);
  }

  SUBCASE("K must be positive") {
    CHECK_THROWS_AS(m.sample_judgments(pair, 0, 1.0, 1), InputError);
    CHECK_THROWS_AS(m.sample_judgments(pair, -2, 1.0, 1), InputError);
  }
}

TEST_CASE("gradient checks against central differences") {
  Rng rng(101);
  const int d = FeatureExtractor::kFeatureDim;

  SUBCASE("generative cross-entropy") {
    for (double temp : {1.0, 0.7}) {
      const RowMatrix x = random_features(rng, 10, d);
      std::vector<int> y;
      for (int i = 0; i < 10; ++i) y.push_back(static_cast<int>(rng.index(4)));
      const Matrix w = random_weights(rng, 4, d);
      Matrix g;
      generative_loss(w, x, y, temp, &g);
      const std::function<double(const Matrix&)> f = [&](const Matrix& wp) {
        return generative_loss(wp, x, y, temp, nullptr);
      };
      CHECK(max_fd_error(f, w, g) < 1e-4);
    }
  }

  SUBCASE("pairwise Bradley-Terry") {
    const RowMatrix xa = random_features(rng, 5, d);
    const RowMatrix xb = random_features(rng, 5, d);
    const Matrix w = random_weights(rng, 4, d);
    Matrix g;
    pairwise_loss(w, xa, xb, 1.0, &g);
    const std::function<double(const Matrix&)> f = [&](const Matrix& wp) {
      return pairwise_loss(wp, xa, xb, 1.0, nullptr);
    };
    CHECK(max_fd_error(f, w, g) < 1e-4);
  }

  SUBCASE("KL distillation") {
    const RowMatrix x = random_features(rng, 10, d);
    Matrix teacher(10, 4);
    for (int i = 0; i < 10; ++i) {
      Eigen::VectorXd p(4);
      for (int c = 0; c < 4; ++c) p(c) = rng.uniform() + 0.01;
      teacher.row(i) = (p / p.sum()).transpose();
    }
    const Matrix w = random_weights(rng, 4, d);
    Matrix g;
    distillation_loss(w, x, teacher, 1.0, &g);
    const std::function<double(const Matrix&)> f = [&](const Matrix& wp) {
      return distillation_loss(wp, x, teacher, 1.0, nullptr);
    };
    CHECK(max_fd_error(f, w, g) < 1e-4);
  }
}

TEST_CASE("pairwise loss of the zero model is ln 2") {
  Rng rng(4);
  const RowMatrix xa = random_features(rng, 7, FeatureExtractor::kFeatureDim);
  const RowMatrix xb = random_features(rng, 7, FeatureExtractor::kFeatureDim);
  CHECK(pairwise_loss(Matrix::Zero(4, FeatureExtractor::kFeatureDim), xa, xb, 1.0, nullptr) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("gradient_descent") {
  Rng rng(8);
  const RowMatrix x = random_features(rng, 30, FeatureExtractor::kFeatureDim);
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) y.push_back(static_cast<int>(rng.index(4)));
  const Objective obj = [&](const Matrix& w, Matrix* g) { return generative_loss(w, x, y, 1.0, g); };

  SUBCASE("accepted losses never increase, even with a huge step") {
    Matrix w = Matrix::Zero(4, FeatureExtractor::kFeatureDim);
    const auto trace = gradient_descent(w, obj, {100, 500.0});
    REQUIRE(trace.size() == 100);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1]);
  }

  SUBCASE("zero epochs leave the weights unchanged") {
    Matrix w = random_weights(rng, 4, FeatureExtractor::kFeatureDim);
    const Matrix before = w;
    CHECK(gradient_descent(w, obj, {0, 1.0}).empty());
    CHECK(w == before);
  }

  SUBCASE("non-finite loss") {
    Matrix w = Matrix::Zero(2, 2);
    const Objective nan = [](const Matrix&, Matrix* g) {
      if (g) *g = Matrix::Zero(2, 2);
      return std::nan("");
    };
    CHECK_THROWS_AS(gradient_descent(w, nan, {3, 1.0}), TrainingDivergence);
  }
}

TEST_CASE("fit_generative") {
  SUBCASE("degenerate separable case") {
    std::vector<LabeledPair> rs;
    for (int i = 0; i < 12; ++i)
      rs.push_back({make_pair("q" + std::to_string(i), "d", "river stone", "river"), 2, "r", Provenance::sft()});
    const Dataset data(LabelSet(4), rs);
    auto m = ReferenceModel::initialized(LabelSet(4), kExtractor, 1);
    fit_generative(m, data, {200, 1.0});
    CHECK(m.label_distribution(rs.front().pair).argmax() == 2);
  }

  SUBCASE("zero epochs") {
    auto m = ReferenceModel::initialized(LabelSet(4), kExtractor, 1);
    const Matrix before = m.weights();
    CHECK(fit_generative(m, text_dataset(1, 10), {0, 1.0}).empty());
    CHECK(m.weights() == before);
  }

  SUBCASE("empty dataset") {
    ReferenceModel m(LabelSet(4), kExtractor);
    CHECK_THROWS_AS(fit_generative(m, Dataset(LabelSet(4), {}), {10, 1.0}), InputError);
  }

  SUBCASE("deterministic") {
    auto a = ReferenceModel::initialized(LabelSet(4), kExtractor, 2);
    auto b = ReferenceModel::initialized(LabelSet(4), kExtractor, 2);
    const auto ta = fit_generative(a, text_dataset(3, 40), {50, 1.0});
    const auto tb = fit_generative(b, text_dataset(3, 40), {50, 1.0});
    CHECK(ta == tb);
    CHECK(a.weights() == b.weights());
  }
}

TEST_CASE("fit_pairwise orders the relevant document first") {
  std::vector<PairwiseTriple> triples;
  for (int i = 0; i < 8; ++i) {
    const std::string q = kWords[static_cast<std::size_t>(i)] + " " + kWords[static_cast<std::size_t>((i + 3) % 8)];
    triples.push_back({Query{"q" + std::to_string(i), q, LanguageFamily::Germanic, 0},
                       Document{"a" + std::to_string(i), kWords[static_cast<std::size_t>((i + 5) % 8)], {}, "filler words"},
                       Document{"b" + std::to_string(i), q, {"#" + kWords[static_cast<std::size_t>(i)]}, q}});
  }
  auto m = ReferenceModel::initialized(LabelSet(4), kExtractor, 3);
  const auto trace = fit_pairwise(m, triples, {300, 1.0});
  CHECK(trace.back() < trace.front());
  for (const auto& t : triples) {
    const double fa = expected_score(m.label_distribution({t.query, t.nonrelevant, {}})).raw;
    const double fb = expected_score(m.label_distribution({t.query, t.relevant, {}})).raw;
    CHECK(fb > fa);
  }

  auto bad = triples;
  bad[0].relevant.id = bad[0].nonrelevant.id;
  CHECK_THROWS_AS(fit_pairwise(m, bad, {1, 1.0}), InputError);
  CHECK_THROWS_AS(fit_pairwise(m, {}, {1, 1.0}), InputError);
}

TEST_CASE("distill") {
  const Dataset data = text_dataset(5, 60);

  SUBCASE("self-distillation converges") {
    auto teacher = ReferenceModel::initialized(LabelSet(4), kExtractor, 4, FeatureExtractor::kFeatureDim, 1.0);
    const auto r = distill(teacher, kExtractor, FeatureExtractor::kFeatureDim, data, {2000, 2.0}, 9);
    CHECK(mean_kl(teacher, r.student, data) <= 1e-3);
  }

  SUBCASE("uniform teacher") {
    ReferenceModel teacher(LabelSet(4), kExtractor);
    const auto r = distill(teacher, kExtractor, 3, data, {500, 2.0}, 9);
    CHECK(r.student.feature_dim() == 3);
    CHECK(mean_kl(teacher, r.student, data) <= 1e-4);
  }

  SUBCASE("KL of a distribution with itself is zero") {
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
      Eigen::VectorXd p(4);
      for (int c = 0; c < 4; ++c) p(c) = rng.uniform();
      p /= p.sum();
      CHECK(kl_divergence(p, p) == 0.0);
    }
  }

  SUBCASE("student wider than teacher features") {
    ReferenceModel teacher(LabelSet(4), kExtractor);
    CHECK_THROWS(distill(teacher, kExtractor, FeatureExtractor::kFeatureDim + 1, data, {1, 1.0}, 1));
  }
}

TEST_CASE("checkpoint round trip") {
  auto m = ReferenceModel::initialized(LabelSet(4), kExtractor, 12, 5, 0.3);
  m.set_version("iter2");
  const auto back = ReferenceModel::from_json(m.to_json(), kExtractor);
  CHECK(back.weights() == m.weights());
  CHECK(back.feature_dim() == 5);
  CHECK(back.version() == "iter2");
  CHECK(m.to_json().at("label_cardinality") == 4);

  Json broken = m.to_json();
  broken["weights"].erase(0);
  CHECK_THROWS_AS(ReferenceModel::from_json(broken, kExtractor), InputError);
}
