#pragma once

// Shared fixtures and independent reference implementations for the unit and
// acceptance tests. Nothing here calls into the code under test for the values
// it checks against.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "serm/core.hpp"
#include "serm/math.hpp"
#include "serm/model.hpp"
#include "serm/random.hpp"

namespace serm::testing {

/// Relevance model with a fixed distribution and a fixed judgment sequence.
class StubModel final : public RelevanceModel {
 public:
  StubModel(std::vector<double> probs, std::vector<int> judgment_labels = {})
      : labels_(static_cast<int>(probs.size())),
        probs_(Eigen::Map<const Eigen::VectorXd>(probs.data(), static_cast<Eigen::Index>(probs.size()))),
        judgments_(std::move(judgment_labels)) {}

  const LabelSet& label_set() const override { return labels_; }
  const std::string& version() const override { return version_; }
  LabelDistribution label_distribution(const QueryDocumentPair&) const override { return LabelDistribution(probs_); }

  // Cycles through the configured labels, or repeats the argmax when none are set.
  std::vector<Judgment> sample_judgments(const QueryDocumentPair&, int k, double, std::uint64_t) const override {
    std::vector<Judgment> out;
    for (int i = 0; i < k; ++i) {
      const int label = judgments_.empty() ? LabelDistribution(probs_).argmax()
                                           : judgments_[static_cast<std::size_t>(i) % judgments_.size()];
      out.push_back({label, "stub", JudgmentSource::Model, {}});
    }
    return out;
  }
  std::string rationale(const QueryDocumentPair&) const override { return "stub"; }

 private:
  LabelSet labels_;
  Eigen::VectorXd probs_;
  std::vector<int> judgments_;
  std::string version_ = "stub";
};

// Distribution over 4 labels whose normalized expected score is exactly f,
// for f in [0, 1]: mass split between labels 0 and 3.
inline std::vector<double> dist_with_score(double f) { return {1.0 - f, 0.0, 0.0, f}; }

// Mixture (1 - a) * point_mass(0) + a * uniform over 4 labels whose entropy is
// h nats, for h in [0, ln 4]. Entropy is increasing in a, so bisect.
inline std::vector<double> dist_with_entropy(double h) {
  auto mix = [](double a) {
    std::vector<double> p(4, a / 4.0);
    p[0] += 1.0 - a;
    return p;
  };
  auto ent = [](const std::vector<double>& p) {
    double e = 0.0;
    for (double x : p)
      if (x > 0) e -= x * std::log(x);
    return e;
  };
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (ent(mix(mid)) < h ? lo : hi) = mid;
  }
  return mix(0.5 * (lo + hi));
}

inline QueryDocumentPair make_pair(const std::string& qid, const std::string& did, const std::string& qtext = "alpha beta",
                                   const std::string& title = "alpha", std::vector<InteractionRecord> interactions = {}) {
  QueryDocumentPair p;
  p.query = {qid, qtext, LanguageFamily::Germanic, 0};
  p.document = {did, title, {}, "summary text"};
  p.interactions = std::move(interactions);
  return p;
}

inline InteractionRecord impression(const std::string& qid, const std::string& did, bool clicked, double dwell,
                                    int rank = 1) {
  return {qid, did, clicked, dwell, rank};
}

// ---------------------------------------------------------------------------
// Finite differences.

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient
// is numerically zero from dominating the maximum.
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Max relative error between `analytic` and central differences of `loss`.
template <typename Param>
double max_fd_error(const std::function<double(const Param&)>& loss, Param at, const Param& analytic,
                    double h = 1e-5) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double orig = at.data()[i];
    at.data()[i] = orig + h;
    const double up = loss(at);
    at.data()[i] = orig - h;
    const double down = loss(at);
    at.data()[i] = orig;
    worst = std::max(worst, relative_error(analytic.data()[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

// Random feature rows in [0, 1) with a trailing bias column of ones.
inline RowMatrix random_features(Rng& rng, int rows, int cols) {
  RowMatrix x(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) x(r, c) = rng.uniform();
    x(r, cols - 1) = 1.0;
  }
  return x;
}

inline Matrix random_weights(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * rng.normal();
  return w;
}

// ---------------------------------------------------------------------------
// NDCG by explicit permutation scoring.

inline double reference_dcg(const std::vector<int>& labels, int k) {
  double dcg = 0.0;
  const int m = std::min<int>(k, static_cast<int>(labels.size()));
  for (int i = 0; i < m; ++i) dcg += (std::pow(2.0, labels[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  return dcg;
}

inline double reference_ndcg(const std::vector<int>& labels, int k) {
  std::vector<int> perm = labels;
  std::sort(perm.begin(), perm.end());
  double ideal = 0.0;
  do {
    ideal = std::max(ideal, reference_dcg(perm, k));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return ideal == 0.0 ? 1.0 : reference_dcg(labels, k) / ideal;
}

// Calls fn(labels) for every label sequence of length 1..max_len over 0..max_label.
inline void for_each_label_list(int max_len, int max_label, const std::function<void(const std::vector<int>&)>& fn) {
  for (int len = 1; len <= max_len; ++len) {
    std::vector<int> v(static_cast<std::size_t>(len), 0);
    while (true) {
      fn(v);
      int pos = len - 1;
      while (pos >= 0 && v[static_cast<std::size_t>(pos)] == max_label) v[static_cast<std::size_t>(pos--)] = 0;
      if (pos < 0) break;
      ++v[static_cast<std::size_t>(pos)];
    }
  }
}

// ---------------------------------------------------------------------------
// Agreement oracle: enumerate all path outcomes of the symmetric noise model.

struct BackendOutcome {
  double stable_correct = 0.0;
  double stable_each_wrong = 0.0;  // probability of a stable label equal to one specific wrong label
};

inline BackendOutcome enumerate_backend(int cardinality, int paths, double error_rate) {
  BackendOutcome out;
  const int truth = 0;
  std::vector<int> labels(static_cast<std::size_t>(paths), 0);
  const double p_wrong_each = error_rate / (cardinality - 1);
  while (true) {
    double prob = 1.0;
    std::vector<int> votes(static_cast<std::size_t>(cardinality), 0);
    for (int l : labels) {
      prob *= l == truth ? 1.0 - error_rate : p_wrong_each;
      ++votes[static_cast<std::size_t>(l)];
    }
    const int top = *std::max_element(votes.begin(), votes.end());
    if (std::count(votes.begin(), votes.end(), top) == 1) {
      const int winner = static_cast<int>(std::find(votes.begin(), votes.end(), top) - votes.begin());
      if (winner == truth) {
        out.stable_correct += prob;
      } else if (winner == 1) {
        out.stable_each_wrong += prob;  // by symmetry every wrong label gets the same mass
      }
    }
    int pos = paths - 1;
    while (pos >= 0 && labels[static_cast<std::size_t>(pos)] == cardinality - 1) labels[static_cast<std::size_t>(pos--)] = 0;
    if (pos < 0) break;
    ++labels[static_cast<std::size_t>(pos)];
  }
  return out;
}

struct ConsensusOracle {
  double yield;
  double accuracy;
};

// Independent backends with the same error rate: consensus requires every
// backend stable at the same label.
inline ConsensusOracle consensus_oracle(int cardinality, int paths, double error_rate, int backends) {
  const auto b = enumerate_backend(cardinality, paths, error_rate);
  const double correct = std::pow(b.stable_correct, backends);
  const double wrong = (cardinality - 1) * std::pow(b.stable_each_wrong, backends);
  return {correct + wrong, correct / (correct + wrong)};
}

// ---------------------------------------------------------------------------

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("serm-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace serm::testing
