#include "serm/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "serm/errors.hpp"
#include "serm/eval.hpp"
#include "serm/jsonl.hpp"
#include "serm/loop.hpp"
#include "serm/random.hpp"

namespace fs = std::filesystem;

namespace serm {
namespace {

RunConfig load_config(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("not valid JSON: ") + e.what(), path);
  } catch (const CorruptArtifact& e) {
    throw ConfigError(e.what(), path);
  }
  return run_config_from_json(j);
}

std::string pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v;
  return s.str();
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

// Rows: method block, then one row per iteration. Columns: overall and each
// family, each as ND@1 / ND@4 / Acc in percent.
std::string format_table(const std::vector<LoadedRun>& runs) {
  const std::vector<std::string> scopes{"overall", "Germanic", "Romance", "Minor"};
  constexpr std::size_t kLabel = 24, kCell = 8;
  std::ostringstream out;
  out << pad("Method", kLabel);
  for (const auto& s : scopes) out << "| " << pad(s, 3 * kCell);
  out << '\n' << pad("", kLabel);
  for (std::size_t i = 0; i < scopes.size(); ++i) out << "| " << pad("ND@1", kCell) << pad("ND@4", kCell) << pad("Acc", kCell);
  out << '\n';
  for (const auto& run : runs) {
    out << run.mode << " (" << run.run_id << ")\n";
    for (const auto& [k, block] : run.iterations) {
      out << pad("  Iteration " + std::to_string(k), kLabel);
      for (const auto& scope : scopes) {
        const Metrics* m = nullptr;
        if (scope == "overall") {
          m = &block.overall;
        } else if (auto it = block.per_family.find(parse_language_family(scope)); it != block.per_family.end()) {
          m = &it->second;
        }
        out << "| ";
        if (m)
          out << pad(pct(m->ndcg1), kCell) << pad(pct(m->ndcg4), kCell) << pad(pct(m->accuracy), kCell);
        else
          out << pad("-", kCell) << pad("-", kCell) << pad("-", kCell);
      }
      out << '\n';
    }
  }
  return out.str();
}

Json read_json_file(const std::string& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw CorruptArtifact(path, std::string("invalid JSON: ") + e.what());
  }
}

// {"comparisons": [{"name", "good", "bad", "same"}, ...]}
Json sbs_section(const std::string& path, std::ostream& out) {
  const Json j = read_json_file(path);
  Json rows = Json::array();
  try {
    out << "\nSide-by-side (delta_SBS, percent)\n";
    for (const auto& c : j.at("comparisons")) {
      const auto name = c.at("name").get<std::string>();
      const auto g = c.at("good").get<std::int64_t>(), b = c.at("bad").get<std::int64_t>(),
                 s = c.at("same").get<std::int64_t>();
      Json row{{"name", name}, {"good", g}, {"bad", b}, {"same", s}, {"delta", nullptr}};
      out << "  " << pad(name, 30);
      try {
        const double delta = sbs_delta(g, b, s);
        out << std::fixed << std::setprecision(1) << 100.0 * delta << '\n';
        row["delta"] = delta;
      } catch (const UndefinedRatio&) {
        out << "undefined (G - B + S = 0)\n";
      }
      rows.push_back(std::move(row));
    }
  } catch (const Json::exception& e) {
    throw CorruptArtifact(path, e.what());
  } catch (const InputError& e) {
    throw CorruptArtifact(path, e.what());
  }
  return rows;
}

// {"metrics": [{"name", "rate_gain", "population"}, ...]}
Json ab_section(const std::string& path, std::ostream& out) {
  const Json j = read_json_file(path);
  Json rows = Json::array();
  try {
    out << "\nA/B absolute gain\n";
    for (const auto& m : j.at("metrics")) {
      const auto name = m.at("name").get<std::string>();
      const double rate = m.at("rate_gain").get<double>();
      const double population = m.at("population").get<double>();
      const double gain = ab_absolute_gain(rate, population);
      out << "  " << pad(name, 30) << std::fixed << std::setprecision(0) << gain << '\n';
      rows.push_back(Json{{"name", name}, {"rate_gain", rate}, {"population", population}, {"absolute_gain", gain}});
    }
  } catch (const Json::exception& e) {
    throw CorruptArtifact(path, e.what());
  } catch (const InputError& e) {
    throw CorruptArtifact(path, e.what());
  }
  return rows;
}

void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw UnsafeOverwrite(dir.string() + " is not empty (use --force)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

std::vector<Json> truth_rows(const GroundTruth& truth) {
  std::vector<Json> rows;
  for (const auto& [key, label] : truth.entries())
    rows.push_back(Json{{"query_id", key.first}, {"doc_id", key.second}, {"label", label}});
  return rows;
}

template <typename T>
std::vector<Json> rows_of(const std::vector<T>& items) {
  std::vector<Json> rows;
  for (const auto& x : items) rows.push_back(to_json(x));
  return rows;
}

// Queries, truth and interactions of one batch, displayed in retrieval order.
void write_batch(const fs::path& dir, const QueryBatch& batch, const WorldConfig& config, std::uint64_t seed) {
  write_jsonl(dir / "queries.jsonl", rows_of(batch.queries));
  write_jsonl(dir / "truth.jsonl", truth_rows(batch.truth));
  write_jsonl(dir / "interactions.jsonl",
              rows_of(simulate_interactions(batch.queries, batch.candidates, batch.truth, config, seed)));
}

int cmd_simulate(const std::string& config_path, std::optional<int> iterations, std::optional<std::uint64_t> seed,
                 bool force, std::ostream& out) {
  RunConfig cfg = load_config(config_path);
  if (iterations) cfg.iterations = *iterations;
  if (seed) cfg.seed = *seed;
  cfg.world.seed = cfg.seed;
  cfg.validate();

  const fs::path dir = fs::path(cfg.output_dir) / "world";
  prepare_dir(dir, force);
  World world = generate_world(cfg.world);
  write_jsonl(dir / "docs.jsonl", rows_of(world.docs()));
  write_text_file(dir / "world.json", canonical_dump(to_json(cfg.world)) + "\n");
  write_batch(dir / "iter0", world.sft_batch(), cfg.world, derive_seed(cfg.seed, "simulate", 0));
  write_jsonl(dir / "eval" / "queries.jsonl", rows_of(world.eval_batch().queries));
  write_jsonl(dir / "eval" / "truth.jsonl", truth_rows(world.eval_batch().truth));
  for (int k = 1; k <= cfg.iterations; ++k) {
    const QueryBatch batch = stream_iteration(world, k);
    write_batch(dir / ("iter" + std::to_string(k)), batch, cfg.world, derive_seed(cfg.seed, "simulate", k));
  }
  out << "wrote " << dir.string() << " (" << world.docs().size() << " docs, iterations 0.." << cfg.iterations << ")\n";
  return kExitOk;
}

struct RunFlags {
  std::string config;
  std::optional<std::string> mode;
  std::optional<int> iterations;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_workers;
  std::optional<double> self_label_noise;
  std::optional<std::string> output_dir;
  std::optional<std::string> run_id;
  std::optional<std::string> endpoint;
  bool force = false;
};

int cmd_run(const RunFlags& f, std::ostream& out) {
  RunConfig cfg = load_config(f.config);
  if (f.mode) cfg.mode = parse_run_mode(*f.mode);
  if (f.iterations) cfg.iterations = *f.iterations;
  if (f.seed) cfg.seed = *f.seed;
  if (f.max_workers) cfg.max_workers = *f.max_workers;
  if (f.self_label_noise) cfg.self_label_noise = *f.self_label_noise;
  if (f.output_dir) cfg.output_dir = *f.output_dir;
  if (f.run_id) cfg.run_id = *f.run_id;
  const char* env = std::getenv("ANNOTATOR_ENDPOINT");
  for (auto& b : cfg.backends) {
    if (b.kind != BackendSpec::Kind::Http) continue;
    if (f.endpoint) {
      b.http.endpoint = *f.endpoint;
    } else if (b.http.endpoint.empty() && env && *env) {
      b.http.endpoint = env;
    }
  }

  const RunResult result = run(cfg, f.force);
  LoadedRun loaded{cfg.effective_run_id(), std::string(to_string(cfg.mode)), {}};
  for (const auto& m : result.manifests) loaded.iterations.emplace_back(m.iteration, m.metrics);
  out << format_table({loaded});
  out << "artifacts: " << result.run_dir.string() << '\n';
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& sbs, const std::string& ab,
               const std::string& json_path, std::ostream& out) {
  std::vector<LoadedRun> runs;
  for (const auto& d : run_dirs) runs.push_back(load_run(d));
  out << format_table(runs);

  Json report{{"runs", Json::array()}};
  for (const auto& r : runs) {
    Json iters = Json::array();
    for (const auto& [k, block] : r.iterations) iters.push_back(Json{{"iteration", k}, {"metrics", to_json(block)}});
    report["runs"].push_back(Json{{"run_id", r.run_id}, {"mode", r.mode}, {"iterations", iters}});
  }
  if (!sbs.empty()) report["sbs"] = sbs_section(sbs, out);
  if (!ab.empty()) report["ab"] = ab_section(ab, out);
  if (!json_path.empty()) write_text_file(json_path, report.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-evolving relevance mining harness"};
  app.require_subcommand(1);

  std::string sim_config;
  std::optional<int> sim_iterations;
  std::optional<std::uint64_t> sim_seed;
  bool sim_force = false;
  auto* sim = app.add_subcommand("simulate", "Write a simulated world as JSONL");
  sim->add_option("config", sim_config, "Config file")->required();
  sim->add_option("--iterations", sim_iterations, "Stream iterations to emit");
  sim->add_option("--seed", sim_seed, "Root seed");
  sim->add_flag("--force", sim_force, "Overwrite a non-empty output directory");

  RunFlags rf;
  auto* runc = app.add_subcommand("run", "Run self-evolution iterations");
  runc->add_option("config", rf.config, "Config file")->required();
  runc->add_option("--mode", rf.mode, "serm | self-training | baseline");
  runc->add_option("--iterations", rf.iterations, "Number of iterations");
  runc->add_option("--seed", rf.seed, "Root seed");
  runc->add_option("--max-workers", rf.max_workers, "Worker threads for mining, annotation and evaluation");
  runc->add_option("--self-label-noise", rf.self_label_noise, "Self-training label corruption rate");
  runc->add_option("--output-dir", rf.output_dir, "Artifact root");
  runc->add_option("--run-id", rf.run_id, "Run directory name");
  runc->add_option("--annotator-endpoint", rf.endpoint, "URL for http backends (overrides ANNOTATOR_ENDPOINT)");
  runc->add_flag("--force", rf.force, "Overwrite a non-empty run directory");

  std::vector<std::string> run_dirs;
  std::string sbs, ab, json_path;
  auto* rep = app.add_subcommand("report", "Compare completed runs");
  rep->add_option("run_dirs", run_dirs, "Run directories (run/<run_id>)")->required();
  rep->add_option("--sbs", sbs, "Side-by-side win counts (JSON)");
  rep->add_option("--ab", ab, "A/B rate gains and populations (JSON)");
  rep->add_option("--json", json_path, "Write the comparison as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(sim_config, sim_iterations, sim_seed, sim_force, out);
    if (*runc) return cmd_run(rf, out);
    if (*rep) return cmd_report(run_dirs, sbs, ab, json_path, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UnsafeOverwrite& e) {
    err << "error: " << e.what() << '\n';
    return kExitUnsafeOverwrite;
  } catch (const BackendError& e) {
    err << "annotator backend failed: " << e.what() << '\n';
    return kExitBackend;
  } catch (const CorruptArtifact& e) {
    err << "corrupt artifact: " << e.what() << '\n';
    return kExitCorrupt;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace serm
