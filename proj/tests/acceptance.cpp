// Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "serm/annotator.hpp"
#include "serm/cli.hpp"
#include "serm/eval.hpp"
#include "serm/jsonl.hpp"
#include "serm/logging.hpp"
#include "serm/loop.hpp"
#include "serm/miner.hpp"
#include "support.hpp"

using namespace serm;
using namespace serm::testing;
namespace fs = std::filesystem;

namespace {

// Collects failed sub-checks for one criterion.
struct Checks {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

struct Criterion {
  int id;
  std::string name;
  double bound_seconds;  // 0: no runtime bound
  std::function<void(Checks&)> body;
};

// ---------------------------------------------------------------------------

void formula_oracles(Checks& c) {
  double worst = 0.0;
  for_each_label_list(5, 3, [&](const std::vector<int>& labels) {
    for (int k = 1; k <= 5; ++k) worst = std::max(worst, std::abs(ndcg_at_k(labels, k) - reference_ndcg(labels, k)));
  });
  c.expect(worst <= 1e-12, "ndcg brute force max error " + std::to_string(worst));

  const double mu_uniform = model_uncertainty(LabelDistribution::uniform(4));
  const double mu_point = model_uncertainty(LabelDistribution::point_mass(4, 1));
  Eigen::VectorXd half(4);
  half << 0.5, 0.5, 0.0, 0.0;
  const double mu_half = model_uncertainty(LabelDistribution(half));
  c.expect(std::abs(mu_uniform - std::log(4.0)) <= 1e-12, "uncertainty(uniform) = " + fmt(mu_uniform, 15));
  c.expect(std::abs(mu_point) <= 1e-12, "uncertainty(point mass) = " + fmt(mu_point, 15));
  c.expect(std::abs(mu_half - std::log(2.0)) <= 1e-12, "uncertainty([.5,.5,0,0]) = " + fmt(mu_half, 15));

  const auto pair = serm::testing::make_pair("q", "d");
  for (int l = 0; l < 4; ++l)
    c.expect(model_disagreement(pair, StubModel(dist_with_score(0.5), {l, l, l}), 3, 1.0, 1) == 0,
             "collapsed samples at label " + std::to_string(l));
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> labels{0, 3};
    const int extra = 1 + static_cast<int>(rng.index(4));
    for (int i = 0; i < extra; ++i) labels.push_back(static_cast<int>(rng.index(4)));
    std::swap(labels[0], labels[rng.index(labels.size())]);
    if (model_disagreement(pair, StubModel(dist_with_score(0.5), labels), static_cast<int>(labels.size()), 1.0, 1) != 3) {
      c.expect(false, "samples containing {0,3} did not give 3");
      break;
    }
  }

  const auto u = expected_score(LabelDistribution::uniform(4));
  c.expect(u.raw == 1.5 && u.normalized == 0.5, "expected_score(uniform) = " + fmt(u.raw) + " / " + fmt(u.normalized));

  int violations = 0, checked = 0;
  Rng sbs_rng(17);
  for (int i = 0; i < 1000; ++i) {
    const auto g = static_cast<std::int64_t>(sbs_rng.index(500));
    const auto b = static_cast<std::int64_t>(sbs_rng.index(500));
    const auto s = static_cast<std::int64_t>(sbs_rng.index(500)) + 1;
    if (g - b + s == 0 || b - g + s == 0) continue;
    ++checked;
    if (std::abs(sbs_delta(g, b, s) + sbs_delta(b, g, s)) > 1e-12) ++violations;
    if (g == b && sbs_delta(g, b, s) != 0.0) c.expect(false, "sbs_delta with G = B is not 0");
  }
  c.expect(sbs_delta(40, 40, 20) == 0.0, "sbs_delta(G = B) != 0");
  c.expect(violations == 0, "sbs_delta antisymmetry violated on " + std::to_string(violations) + " of " +
                                std::to_string(checked) + " random triples");

  const double gain = ab_absolute_gain(0.000359, 70'000'000);
  c.expect(std::abs(gain - 25'130.0) < 1e-6, "ab gain " + fmt(gain, 6));
}

void gradient_checks(Checks& c) {
  Rng rng(2024);
  const int d = FeatureExtractor::kFeatureDim;

  {
    const RowMatrix x = random_features(rng, 15, d);
    std::vector<int> y;
    for (int i = 0; i < 15; ++i) y.push_back(static_cast<int>(rng.index(4)));
    const Matrix w = random_weights(rng, 4, d);
    Matrix g;
    generative_loss(w, x, y, 1.0, &g);
    const std::function<double(const Matrix&)> f = [&](const Matrix& p) { return generative_loss(p, x, y, 1.0, nullptr); };
    const double e = max_fd_error(f, w, g);
    c.note("generative " + sci(e));
    c.expect(e < 1e-4, "generative loss max relative error " + sci(e));
  }
  {
    const RowMatrix xa = random_features(rng, 12, d);
    const RowMatrix xb = random_features(rng, 12, d);
    const Matrix w = random_weights(rng, 4, d);
    Matrix g;
    pairwise_loss(w, xa, xb, 1.0, &g);
    const std::function<double(const Matrix&)> f = [&](const Matrix& p) { return pairwise_loss(p, xa, xb, 1.0, nullptr); };
    const double e = max_fd_error(f, w, g);
    c.note("bradley-terry " + sci(e));
    c.expect(e < 1e-4, "Bradley-Terry loss max relative error " + sci(e));
  }
  {
    const RowMatrix x = random_features(rng, 15, d);
    Matrix teacher(15, 4);
    for (int i = 0; i < 15; ++i) {
      Eigen::VectorXd p(4);
      for (int k = 0; k < 4; ++k) p(k) = rng.uniform() + 0.01;
      teacher.row(i) = (p / p.sum()).transpose();
    }
    const Matrix w = random_weights(rng, 4, d);
    Matrix g;
    distillation_loss(w, x, teacher, 1.0, &g);
    const std::function<double(const Matrix&)> f = [&](const Matrix& p) {
      return distillation_loss(p, x, teacher, 1.0, nullptr);
    };
    const double e = max_fd_error(f, w, g);
    c.note("kl " + sci(e));
    c.expect(e < 1e-4, "KL distillation max relative error " + sci(e));
  }
  {
    const RowMatrix x = random_features(rng, 20, ClickModel::kInputDim);
    Vector y(20);
    for (int i = 0; i < 20; ++i) y(i) = rng.bernoulli(0.4) ? 1.0 : 0.0;
    Vector w(ClickModel::kInputDim);
    for (int i = 0; i < w.size(); ++i) w(i) = rng.normal();
    Vector g;
    click_loss(w, x, y, &g);
    const std::function<double(const Vector&)> f = [&](const Vector& p) { return click_loss(p, x, y, nullptr); };
    const double e = max_fd_error(f, w, g);
    c.note("click " + sci(e));
    c.expect(e < 1e-4, "click logistic loss max relative error " + sci(e));
  }
}

void annotator_statistics(Checks& c) {
  constexpr std::size_t kPairs = 10'000;
  auto truth = std::make_shared<GroundTruth>();
  std::vector<MinedCandidate> cands;
  Rng rng(99);
  for (std::size_t i = 0; i < kPairs; ++i) {
    MinedCandidate m;
    m.pair = serm::testing::make_pair("q" + std::to_string(i / 10), "d" + std::to_string(i));
    m.fired_agents = {Agent::Uncertainty};
    m.mined_iteration = 1;
    truth->set(m.pair.query.id, m.pair.document.id, static_cast<int>(rng.index(4)));
    cands.push_back(std::move(m));
  }
  std::vector<std::shared_ptr<const AnnotatorBackend>> backends;
  for (int i = 0; i < 3; ++i)
    backends.push_back(std::make_shared<MockOracleBackend>("mock-" + std::to_string(i), truth, LabelSet(4), 0.3,
                                                           static_cast<std::uint64_t>(31 + i)));

  const auto two = annotate_batch(cands, {backends[0], backends[1]}, 3, 5);
  std::size_t correct = 0;
  for (const auto& a : two.annotations) correct += a.label == truth->at(a.query_id, a.doc_id);
  const double accuracy = two.annotations.empty() ? 0.0 : static_cast<double>(correct) / two.annotations.size();
  const double yield = static_cast<double>(two.annotations.size()) / kPairs;
  const auto oracle = consensus_oracle(4, 3, 0.3, 2);
  c.note("accuracy " + fmt(accuracy) + ", yield " + fmt(yield) + " (oracle " + fmt(oracle.yield, 6) + ")");
  c.expect(accuracy >= 0.98, "accuracy " + fmt(accuracy) + " < 0.98");
  c.expect(std::abs(yield - oracle.yield) <= 0.03, "yield " + fmt(yield) + " vs oracle " + fmt(oracle.yield, 6));
  c.expect(std::abs(oracle.yield - 0.617008) < 1e-6, "enumeration oracle " + fmt(oracle.yield, 6));

  const auto three = annotate_batch(cands, backends, 3, 5);
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& a : two.annotations) keys.insert({a.query_id, a.doc_id});
  bool subset = three.annotations.size() <= two.annotations.size();
  for (const auto& a : three.annotations) subset = subset && keys.count({a.query_id, a.doc_id}) == 1;
  c.note("third backend keeps " + std::to_string(three.annotations.size()) + " of " +
         std::to_string(two.annotations.size()));
  c.expect(subset, "third backend added annotations");
}

RunConfig default_config(const fs::path& out) {
  RunConfig cfg = run_config_from_json(
      Json::parse(read_text_file(fs::path(SERM_SOURCE_DIR) / "configs" / "default.json")));
  cfg.output_dir = out.string();
  cfg.iterations = 3;
  cfg.seed = 7;
  return cfg;
}

std::vector<double> ndcg1_trace(const RunResult& r) {
  std::vector<double> out;
  for (const auto& m : r.manifests) out.push_back(100.0 * m.metrics.overall.ndcg1);
  return out;
}

std::string trace_string(const std::vector<double>& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) s += (i ? " -> " : "") + fmt(t[i], 2);
  return s;
}

void relative_reproduction(Checks& c) {
  const auto dir = scratch_dir("acceptance-repro");
  RunConfig serm_cfg = default_config(dir);
  serm_cfg.mode = RunMode::SERM;
  RunConfig st_cfg = serm_cfg;
  st_cfg.mode = RunMode::SelfTraining;
  RunConfig noisy_cfg = st_cfg;
  noisy_cfg.self_label_noise = 0.3;
  noisy_cfg.run_id = "self-training-noise0.3";

  const auto serm_t = ndcg1_trace(run(serm_cfg));
  const auto st_t = ndcg1_trace(run(st_cfg));
  const auto noisy_t = ndcg1_trace(run(noisy_cfg));
  c.note("SERM " + trace_string(serm_t));
  c.note("self-training " + trace_string(st_t));
  c.note("self-training, noise 0.3 " + trace_string(noisy_t));

  c.expect(serm_t.back() >= serm_t.front() + 2.0, "(a) SERM gain " + fmt(serm_t.back() - serm_t.front(), 2) + " < 2");
  for (std::size_t k = 1; k < serm_t.size(); ++k)
    c.expect(serm_t[k] >= st_t[k], "(b) iteration " + std::to_string(k) + ": SERM " + fmt(serm_t[k], 2) +
                                       " < self-training " + fmt(st_t[k], 2));
  bool decline = false;
  for (std::size_t k = 1; k < noisy_t.size(); ++k) decline = decline || noisy_t[k] < noisy_t[k - 1];
  c.expect(decline, "(c) noisy self-training never declines");
  for (std::size_t k = 1; k < serm_t.size(); ++k)
    c.expect(serm_t[k] >= serm_t[k - 1], "(c) SERM declines at iteration " + std::to_string(k));
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "serm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != kExitOk) std::cerr << err.str();
  return code;
}

void determinism(Checks& c) {
  const auto dir = scratch_dir("acceptance-determinism");
  const std::string config = (fs::path(SERM_SOURCE_DIR) / "configs" / "default.json").string();
  const fs::path a = dir / "a", b = dir / "b";
  const std::vector<std::string> common{"run", config, "--iterations", "3", "--seed", "7", "--output-dir"};
  auto with = [&](std::vector<std::string> extra, const fs::path& out) {
    std::vector<std::string> args = common;
    args.push_back(out.string());
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  };
  c.expect(with({}, a) == kExitOk, "first run failed");
  c.expect(with({}, b) == kExitOk, "second run failed");
  if (!c.failures.empty()) return;

  const fs::path ra = a / "run" / "serm-seed7", rb = b / "run" / "serm-seed7";
  std::size_t compared = 0;
  auto same = [&](const fs::path& rel) {
    ++compared;
    const bool ok = fs::exists(ra / rel) && read_text_file(ra / rel) == read_text_file(rb / rel);
    c.expect(ok, rel.string() + " differs between runs");
  };
  for (int k = 0; k <= 3; ++k) {
    const fs::path it = "iter" + std::to_string(k);
    same(it / "manifest.json");
    same(it / "labeled.jsonl");
  }
  same("report.json");
  c.note(std::to_string(compared) + " files byte-identical");

  c.expect(with({"--mode", "self-training"}, a) == kExitOk, "self-training run failed");
  const auto mined_serm = read_text_file(ra / "iter1" / "mined.jsonl");
  const auto mined_st = read_text_file(a / "run" / "self-training-seed7" / "iter1" / "mined.jsonl");
  c.expect(!mined_serm.empty() && mined_serm == mined_st, "iteration-1 mined.jsonl differs between modes");
  c.note("iteration-1 mined.jsonl identical across modes");
}

ClickModel constant_click_model(const std::shared_ptr<const FeatureExtractor>& ex, double p) {
  Vector w = Vector::Zero(ClickModel::kInputDim);
  w(FeatureExtractor::kFeatureDim) = std::log(p / (1.0 - p));
  return ClickModel(ex, w);
}

void miner_predicates(Checks& c) {
  const auto ex = std::make_shared<const FeatureExtractor>();
  const MinerConfig cfg;
  const auto clicked = serm::testing::make_pair("q", "d", "alpha", "alpha", {impression("q", "d", true, 2.0)});
  const auto unclicked = serm::testing::make_pair("q", "d", "alpha", "alpha", {impression("q", "d", false, 0.0)});
  const auto plain = serm::testing::make_pair("q", "d");

  c.expect(user_feedback_agent(clicked, StubModel(dist_with_score(0.2)), cfg).fired, "user feedback: click, f 0.2");
  c.expect(!user_feedback_agent(unclicked, StubModel(dist_with_score(0.2)), cfg).fired, "user feedback: no click");
  c.expect(!user_feedback_agent(clicked, StubModel(dist_with_score(0.9)), cfg).fired, "user feedback: f 0.9");
  c.expect(user_feedback_fires(false, 6.0, 0.2, cfg), "user feedback: dwell 6 s");

  const auto cm25 = constant_click_model(ex, 0.25);
  c.expect(click_model_feedback_agent(plain, StubModel(dist_with_score(0.3)), cm25, cfg).fired, "click model: p 0.25");
  c.expect(!click_model_feedback_agent(plain, StubModel(dist_with_score(0.3)), constant_click_model(ex, 0.05), cfg).fired,
           "click model: p 0.05");
  c.expect(!click_model_feedback_agent(plain, StubModel(dist_with_score(0.8)), cm25, cfg).fired, "click model: f 0.8");

  c.expect(intrinsic_agent(plain, StubModel(dist_with_entropy(0.1), {0, 3, 3}), cfg).fired, "intrinsic: md 3");
  c.expect(intrinsic_agent(plain, StubModel(dist_with_entropy(1.38), {1, 1, 1}), cfg).fired, "intrinsic: mu 1.38");
  c.expect(!intrinsic_agent(plain, StubModel(dist_with_entropy(0.5), {1, 2, 2}), cfg).fired, "intrinsic: md 1, mu 0.5");

  // Raising tau_c only adds user and click-model firings; raising tau_md or
  // tau_mu only removes intrinsic firings.
  Rng rng(4242);
  std::vector<QueryDocumentPair> pairs;
  const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "eps"};
  for (int i = 0; i < 25; ++i) {
    const std::string q = "q" + std::to_string(i), d = "d" + std::to_string(i);
    const bool click = rng.bernoulli(0.5);
    pairs.push_back(serm::testing::make_pair(q, d, words[rng.index(5)] + " " + words[rng.index(5)], words[rng.index(5)],
                              {impression(q, d, click, click ? rng.exponential(5.0) : 0.0)}));
  }
  ReferenceModel model(LabelSet(4), ex);
  model.set_weights(random_weights(rng, 4, FeatureExtractor::kFeatureDim, 1.5));
  const auto cm = constant_click_model(ex, 0.3);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    MinerConfig lo;
    lo.seed = rng.next();
    lo.tau_u = 10.0 * rng.uniform();
    lo.tau_c = 0.01 + 0.9 * rng.uniform();
    lo.tau_cm = 0.01 + 0.9 * rng.uniform();
    lo.tau_md = 3.0 * rng.uniform();
    lo.tau_mu = std::log(4.0) * rng.uniform();
    MinerConfig hi = lo;
    hi.tau_c = lo.tau_c + (0.99 - lo.tau_c) * rng.uniform();
    hi.tau_md = lo.tau_md + (3.0 - lo.tau_md) * rng.uniform();
    hi.tau_mu = lo.tau_mu + (std::log(4.0) - lo.tau_mu) * rng.uniform();
    for (const auto& p : pairs) {
      violations += user_feedback_agent(p, model, lo).fired && !user_feedback_agent(p, model, hi).fired;
      violations += click_model_feedback_agent(p, model, cm, lo).fired && !click_model_feedback_agent(p, model, cm, hi).fired;
      violations += intrinsic_agent(p, model, hi).fired && !intrinsic_agent(p, model, lo).fired;
    }
  }
  c.expect(violations == 0, std::to_string(violations) + " monotonicity violations");
  c.note("1000 configurations x 25 pairs");
}

}  // namespace

int main() {
  warnings_enabled() = false;
  const std::vector<Criterion> criteria{
      {1, "formula oracles", 10.0, formula_oracles},
      {2, "gradient checks", 30.0, gradient_checks},
      {3, "annotator statistics", 60.0, annotator_statistics},
      {4, "relative reproduction", 300.0, relative_reproduction},
      {5, "determinism", 0.0, determinism},
      {6, "miner predicates and monotonicity", 0.0, miner_predicates},
  };

  int failed = 0;
  for (const auto& cr : criteria) {
    Checks checks;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.body(checks);
    } catch (const std::exception& e) {
      checks.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cr.bound_seconds > 0.0 && secs > cr.bound_seconds)
      checks.failures.push_back("took " + fmt(secs, 1) + " s, bound " + fmt(cr.bound_seconds, 0) + " s");
    const bool ok = checks.failures.empty();
    failed += !ok;

    std::string detail;
    for (const auto& n : checks.notes) detail += (detail.empty() ? "" : "; ") + n;
    for (const auto& f : checks.failures) detail += (detail.empty() ? "" : "; ") + std::string("FAILED: ") + f;
    const std::string timing =
        fmt(secs, 2) + " s" + (cr.bound_seconds > 0.0 ? ", bound " + fmt(cr.bound_seconds, 0) + " s" : "");
    std::printf("%s criterion %d: %s (%s)%s%s\n", ok ? "PASS" : "FAIL", cr.id, cr.name.c_str(), timing.c_str(),
                detail.empty() ? "" : " | ", detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
