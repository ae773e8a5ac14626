#include "serm/loop.hpp"

#include <chrono>
#include <unordered_map>

#include "serm/errors.hpp"
#include "serm/hash.hpp"
#include "serm/jsonl.hpp"
#include "serm/logging.hpp"
#include "serm/random.hpp"
#include "serm/strict_json.hpp"

namespace fs = std::filesystem;

namespace serm {

std::string_view to_string(RunMode m) {
  switch (m) {
    case RunMode::SERM: return "serm";
    case RunMode::SelfTraining: return "self-training";
    case RunMode::BaselineOnly: return "baseline";
  }
  return "serm";
}

RunMode parse_run_mode(std::string_view name) {
  for (RunMode m : {RunMode::SERM, RunMode::SelfTraining, RunMode::BaselineOnly})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown mode '" + std::string(name) + "'", "run.mode");
}

std::string RunConfig::effective_run_id() const {
  if (!run_id.empty()) return run_id;
  return std::string(to_string(mode)) + "-seed" + std::to_string(seed);
}

void RunConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("missing required field", "output_dir");
  if (run_id.find('/') != std::string::npos || run_id == "." || run_id == "..")
    throw ConfigError("must be a plain directory name", "run.run_id");
  if (iterations < 0) throw ConfigError("must be >= 0", "run.iterations");
  if (!(self_label_noise >= 0.0 && self_label_noise <= 1.0)) throw ConfigError("must be in [0, 1]", "run.self_label_noise");
  if (max_workers < 1) throw ConfigError("must be >= 1", "run.max_workers");
  if (training.epochs < 0) throw ConfigError("must be >= 0", "training.epochs");
  if (!(training.learning_rate > 0.0)) throw ConfigError("must be positive", "training.learning_rate");
  if (click_training.epochs < 0) throw ConfigError("must be >= 0", "click_training.epochs");
  if (!(click_training.learning_rate > 0.0)) throw ConfigError("must be positive", "click_training.learning_rate");
  world.validate();
  miner.validate(LabelSet{});
  if (annotator_paths < 1) throw ConfigError("must be >= 1", "annotator.paths");
  if (mode == RunMode::SERM && backends.empty()) throw ConfigError("SERM mode needs a backend", "annotator.backends");
  std::set<std::string> ids;
  for (const auto& b : backends) {
    if (b.id.empty()) throw ConfigError("backend id is empty", "annotator.backends");
    if (!ids.insert(b.id).second) throw ConfigError("duplicate backend id " + b.id, "annotator.backends");
    if (b.kind == BackendSpec::Kind::Mock && !(b.path_error_rate >= 0.0 && b.path_error_rate < 0.5))
      throw ConfigError("must be in [0, 0.5)", "annotator.backends." + b.id + ".path_error_rate");
  }
}

namespace {

TrainOptions train_options_from_json(const Json& j, const std::string& path, TrainOptions out) {
  StrictReader r(j, path);
  r.optional("epochs", out.epochs);
  r.optional("learning_rate", out.learning_rate);
  r.finish();
  return out;
}

Json to_json(const TrainOptions& t) { return Json{{"epochs", t.epochs}, {"learning_rate", t.learning_rate}}; }

BackendSpec backend_from_json(const Json& j, std::size_t index) {
  const std::string path = "annotator.backends[" + std::to_string(index) + "]";
  StrictReader r(j, path);
  BackendSpec b;
  r.required("id", b.id);
  std::string kind = "mock";
  r.optional("kind", kind);
  if (kind == "mock") {
    b.kind = BackendSpec::Kind::Mock;
    r.optional("path_error_rate", b.path_error_rate);
  } else if (kind == "http") {
    b.kind = BackendSpec::Kind::Http;
    r.optional("endpoint", b.http.endpoint);
    r.optional("timeout_seconds", b.http.timeout_seconds);
    r.optional("max_retries", b.http.max_retries);
    r.optional("max_in_flight", b.http.max_in_flight);
  } else {
    throw ConfigError("must be \"mock\" or \"http\"", r.field("kind"));
  }
  r.finish();
  return b;
}

Json to_json(const BackendSpec& b) {
  if (b.kind == BackendSpec::Kind::Mock)
    return Json{{"id", b.id}, {"kind", "mock"}, {"path_error_rate", b.path_error_rate}};
  return Json{{"id", b.id},
              {"kind", "http"},
              {"endpoint", b.http.endpoint},
              {"timeout_seconds", b.http.timeout_seconds},
              {"max_retries", b.http.max_retries},
              {"max_in_flight", b.http.max_in_flight}};
}

}  // namespace

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  StrictReader top(j, "");
  top.required("output_dir", c.output_dir);
  if (const Json* run = top.section("run")) {
    StrictReader r(*run, "run");
    std::string mode(to_string(c.mode));
    r.optional("mode", mode);
    c.mode = parse_run_mode(mode);
    r.optional("run_id", c.run_id);
    r.optional("iterations", c.iterations);
    r.optional("seed", c.seed);
    r.optional("self_label_noise", c.self_label_noise);
    r.optional("max_workers", c.max_workers);
    r.finish();
  }
  if (const Json* t = top.section("training")) c.training = train_options_from_json(*t, "training", c.training);
  if (const Json* t = top.section("click_training"))
    c.click_training = train_options_from_json(*t, "click_training", c.click_training);
  if (const Json* m = top.section("miner")) c.miner = miner_config_from_json(*m, LabelSet{});
  if (const Json* w = top.section("world")) c.world = world_config_from_json(*w);
  if (const Json* a = top.section("annotator")) {
    StrictReader r(*a, "annotator");
    r.optional("paths", c.annotator_paths);
    if (const Json* list = r.section("backends")) {
      if (!list->is_array()) throw ConfigError("expected an array", "annotator.backends");
      c.backends.clear();
      for (std::size_t i = 0; i < list->size(); ++i) c.backends.push_back(backend_from_json((*list)[i], i));
    }
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

Json to_json(const RunConfig& c) {
  Json backends = Json::array();
  for (const auto& b : c.backends) backends.push_back(to_json(b));
  return Json{{"run",
               {{"mode", std::string(to_string(c.mode))},
                {"iterations", c.iterations},
                {"seed", c.seed},
                {"self_label_noise", c.self_label_noise}}},
              {"training", to_json(c.training)},
              {"click_training", to_json(c.click_training)},
              {"miner", to_json(c.miner)},
              {"world", to_json(c.world)},
              {"annotator", {{"paths", c.annotator_paths}, {"backends", backends}}}};
}

std::vector<LabeledPair> self_label(const std::vector<MinedCandidate>& candidates, const RelevanceModel& model,
                                    int iteration, double noise, std::uint64_t seed) {
  const int card = model.label_set().cardinality();
  std::vector<LabeledPair> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    int label = model.label_distribution(c.pair).argmax();
    if (noise > 0.0) {
      Rng rng(derive_seed(seed, "self-label", c.pair.query.id, c.pair.document.id));
      if (rng.bernoulli(noise)) {
        const int other = static_cast<int>(rng.index(static_cast<std::size_t>(card - 1)));
        label = other >= label ? other + 1 : other;
      }
    }
    out.push_back({c.pair, label, model.rationale(c.pair), Provenance::self_training(iteration)});
  }
  return out;
}

namespace {

struct Seeds {
  std::uint64_t run, init, click;
  std::uint64_t interactions(int k) const { return derive_seed(run, "interactions", k); }
  std::uint64_t miner(int k) const { return derive_seed(run, "miner", k); }
  std::uint64_t annotate(int k) const { return derive_seed(run, "annotate", k); }
  std::uint64_t self_label(int k) const { return derive_seed(run, "self-label", k); }
  std::uint64_t backend(const std::string& id) const { return derive_seed(run, "backend", id); }
};

std::string model_hash(const ReferenceModel& m) { return sha256_hex(canonical_dump(m.to_json())); }

template <typename T>
std::vector<Json> rows_of(const std::vector<T>& items) {
  std::vector<Json> rows;
  rows.reserve(items.size());
  for (const auto& x : items) rows.push_back(to_json(x));
  return rows;
}

std::map<std::string, std::vector<Document>> candidate_docs(const World& world, const QueryBatch& batch) {
  std::map<std::string, std::vector<Document>> out;
  for (const auto& [qid, ids] : batch.candidates) {
    auto& docs = out[qid];
    for (const auto& id : ids) docs.push_back(world.doc(id));
  }
  return out;
}

std::vector<InteractionRecord> interact(const World& world, const QueryBatch& batch, const RelevanceModel& model,
                                        std::uint64_t seed) {
  std::map<std::string, std::vector<std::string>> ranked;
  for (const auto& q : batch.queries) {
    auto it = batch.candidates.find(q.id);
    if (it == batch.candidates.end()) continue;
    ranked[q.id] = rank_by_model(model, world, q, it->second);
  }
  return simulate_interactions(batch.queries, ranked, batch.truth, world.config(), seed);
}

ReferenceModel train(const ReferenceModel& init, const Dataset& data, const TrainOptions& options,
                     const std::string& version) {
  ReferenceModel m = init;
  fit_generative(m, data, options);
  m.set_version(version);
  return m;
}

std::vector<std::shared_ptr<const AnnotatorBackend>> make_backends(const RunConfig& cfg, const Seeds& seeds,
                                                                   const LabelSet& labels,
                                                                   std::shared_ptr<const GroundTruth> truth) {
  std::vector<std::shared_ptr<const AnnotatorBackend>> out;
  for (const auto& b : cfg.backends) {
    if (b.kind == BackendSpec::Kind::Mock) {
      out.push_back(std::make_shared<MockOracleBackend>(b.id, truth, labels, b.path_error_rate, seeds.backend(b.id)));
    } else {
      if (b.http.endpoint.empty()) throw ConfigError("http backend has no endpoint", "annotator.backends." + b.id);
      out.push_back(std::make_shared<HttpBackend>(b.id, b.http, labels));
    }
  }
  return out;
}

}  // namespace

RunResult run(const RunConfig& config, bool force) {
  RunConfig cfg = config;
  cfg.world.seed = cfg.seed;
  cfg.validate();

  RunResult result;
  result.run_dir = fs::path(cfg.output_dir) / "run" / cfg.effective_run_id();
  if (fs::exists(result.run_dir) && !fs::is_empty(result.run_dir)) {
    if (!force) throw UnsafeOverwrite(result.run_dir.string() + " is not empty (use --force)");
    fs::remove_all(result.run_dir);
  }
  fs::create_directories(result.run_dir);

  const Seeds seeds{cfg.seed, derive_seed(cfg.seed, "model-init"), derive_seed(cfg.seed, "click-logs")};
  const Json config_json = to_json(cfg);
  const std::string run_id = cfg.effective_run_id();

  World world = generate_world(cfg.world);
  const LabelSet labels = world.label_set();
  const auto extractor = world.extractor();
  const ReferenceModel init = ReferenceModel::initialized(labels, extractor, seeds.init);

  ReferenceModel model = train(init, world.sft_dataset(), cfg.training, "iter0");

  // Click model: fitted once on logs of the SFT queries ranked by the baseline.
  ClickModel click_model(extractor);
  if (cfg.mode != RunMode::BaselineOnly && cfg.iterations > 0) {
    const auto logs = interact(world, world.sft_batch(), model, seeds.click);
    std::unordered_map<std::string, Query> queries;
    std::unordered_map<std::string, Document> docs;
    for (const auto& q : world.sft_batch().queries) queries.emplace(q.id, q);
    for (const auto& d : world.docs()) docs.emplace(d.id, d);
    click_model = fit_click_model(logs, queries, docs, extractor, cfg.click_training);
  }

  std::vector<Dataset> generated;
  std::string previous_manifest;
  Json chain = Json::array();
  Json report_iterations = Json::array();

  const int last = cfg.mode == RunMode::BaselineOnly ? 0 : cfg.iterations;
  for (int k = 0; k <= last; ++k) {
    const auto started = std::chrono::steady_clock::now();
    const fs::path dir = result.run_dir / ("iter" + std::to_string(k));
    Json warnings = Json::array();
    std::vector<MinedCandidate> mined;
    AnnotationBatch annotated;
    Dataset fresh(labels, {});
    std::size_t stream_queries = 0, interaction_count = 0;
    Dataset training_set = world.sft_dataset();

    if (k > 0) {
      QueryBatch batch = stream_iteration(world, k);
      stream_queries = batch.queries.size();
      const auto logs = interact(world, batch, model, seeds.interactions(k));
      interaction_count = logs.size();

      MinerConfig miner = cfg.miner;
      miner.seed = seeds.miner(k);
      mined = mine(batch.queries, candidate_docs(world, batch), logs, model, click_model, miner, k, cfg.max_workers);

      std::vector<LabeledPair> records;
      if (cfg.mode == RunMode::SERM) {
        auto truth = std::make_shared<const GroundTruth>(batch.truth);
        const auto backends = make_backends(cfg, seeds, labels, truth);
        annotated = annotate_batch(mined, backends, cfg.annotator_paths, seeds.annotate(k), k, cfg.max_workers);
        if (annotated.non_production) warnings.push_back("single annotator backend: not a production configuration");
        std::map<std::pair<std::string, std::string>, const MinedCandidate*> by_key;
        for (const auto& c : mined) by_key[{c.pair.query.id, c.pair.document.id}] = &c;
        for (const auto& a : annotated.annotations) {
          const auto* c = by_key.at({a.query_id, a.doc_id});
          records.push_back({c->pair, a.label, a.consolidated_rationale, Provenance::serm(k)});
        }
      } else {
        records = self_label(mined, model, k, cfg.self_label_noise, seeds.self_label(k));
      }
      fresh = Dataset(labels, std::move(records));
      generated.push_back(fresh);

      std::vector<Dataset> parts{world.sft_dataset()};
      parts.insert(parts.end(), generated.begin(), generated.end());
      training_set = dataset_merge(parts);

      if (fresh.empty()) {
        const std::string msg = "iteration " + std::to_string(k) + " produced no labeled pairs; model unchanged";
        log_warning(msg);
        warnings.push_back(msg);
      } else {
        model = train(init, training_set, cfg.training, "iter" + std::to_string(k));
      }
    }

    const MetricBlock metrics = evaluate(model, world.eval_batch(), world, cfg.max_workers);

    write_jsonl(dir / "mined.jsonl", rows_of(mined));
    write_jsonl(dir / "annotations.jsonl", rows_of(annotated.annotations));
    write_jsonl(dir / "rejections.jsonl", rows_of(annotated.rejections));
    write_text_file(dir / "labeled.jsonl", k == 0 ? world.sft_dataset().canonical_jsonl() : fresh.canonical_jsonl());
    write_jsonl(dir / "metrics.jsonl", metric_rows(metrics));
    write_text_file(dir / "model.json", canonical_dump(model.to_json()) + "\n");

    Json previous_generated = Json::array();
    for (std::size_t i = 0; i + 1 < generated.size(); ++i) previous_generated.push_back(generated[i].content_hash());
    const std::size_t labeled_count = k == 0 ? 0 : fresh.size();

    Json manifest{
        {"run_id", run_id},
        {"mode", std::string(to_string(cfg.mode))},
        {"iteration", k},
        {"config", config_json},
        {"seeds",
         {{"run", cfg.seed},
          {"world", cfg.world.seed},
          {"model_init", seeds.init},
          {"click_logs", seeds.click},
          {"interactions", k > 0 ? seeds.interactions(k) : 0},
          {"miner", k > 0 ? seeds.miner(k) : 0},
          {"annotate", k > 0 ? seeds.annotate(k) : 0},
          {"self_label", k > 0 ? seeds.self_label(k) : 0}}},
        {"hashes",
         {{"corpus", world.corpus_hash()},
          {"sft", world.sft_dataset().content_hash()},
          {"previous_generated", previous_generated},
          {"new_generated", k > 0 ? fresh.content_hash() : ""},
          {"training_set", training_set.content_hash()},
          {"model", model_hash(model)}}},
        {"counts",
         {{"stream_queries", stream_queries},
          {"interactions", interaction_count},
          {"mined", mined.size()},
          {"annotated", labeled_count},
          {"rejected", annotated.rejections.size()},
          {"training_records", training_set.size()}}},
        {"metrics", to_json(metrics)},
        {"warnings", warnings},
        {"previous_manifest", previous_manifest}};
    const std::string bytes = canonical_dump(manifest);
    write_text_file(dir / "manifest.json", bytes + "\n");

    IterationManifest im;
    im.iteration = k;
    im.body = manifest;
    im.hash = sha256_hex(bytes);
    im.metrics = metrics;
    im.mined = mined.size();
    im.annotated = labeled_count;
    im.rejected = annotated.rejections.size();
    im.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_text_file(dir / "timing.json", canonical_dump(Json{{"wall_seconds", im.wall_seconds}}) + "\n");

    previous_manifest = im.hash;
    chain.push_back(im.hash);
    report_iterations.push_back(Json{{"iteration", k}, {"manifest_hash", im.hash}, {"metrics", to_json(metrics)}});
    result.manifests.push_back(std::move(im));
  }

  result.report = Json{{"run_id", run_id},
                       {"mode", std::string(to_string(cfg.mode))},
                       {"config", config_json},
                       {"iterations", report_iterations},
                       {"manifest_chain", chain}};
  write_text_file(result.run_dir / "report.json", canonical_dump(result.report) + "\n");
  return result;
}

LoadedRun load_run(const fs::path& run_dir) {
  const fs::path report_path = run_dir / "report.json";
  auto parse = [](const fs::path& p) {
    try {
      return Json::parse(read_text_file(p));
    } catch (const Json::exception& e) {
      throw CorruptArtifact(p.string(), std::string("invalid JSON: ") + e.what());
    }
  };
  const Json report = parse(report_path);
  LoadedRun out;
  try {
    out.run_id = report.at("run_id").get<std::string>();
    out.mode = report.at("mode").get<std::string>();
    for (const auto& it : report.at("iterations")) {
      const int k = it.at("iteration").get<int>();
      const std::string expected = it.at("manifest_hash").get<std::string>();
      const fs::path manifest_path = run_dir / ("iter" + std::to_string(k)) / "manifest.json";
      const Json manifest = parse(manifest_path);
      if (sha256_hex(canonical_dump(manifest)) != expected)
        throw CorruptArtifact(manifest_path.string(), "hash does not match report.json");
      try {
        out.iterations.emplace_back(k, metric_block_from_json(manifest.at("metrics")));
      } catch (const std::exception& e) {
        throw CorruptArtifact(manifest_path.string(), e.what());
      }
    }
  } catch (const Json::exception& e) {
    throw CorruptArtifact(report_path.string(), e.what());
  } catch (const InputError& e) {
    throw CorruptArtifact(report_path.string(), e.what());
  }
  return out;
}

}  // namespace serm
