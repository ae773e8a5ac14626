#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "serm/annotator.hpp"
#include "serm/core.hpp"
#include "serm/eval.hpp"
#include "serm/miner.hpp"
#include "serm/model.hpp"
#include "serm/simulator.hpp"

namespace serm {

enum class RunMode { SERM, SelfTraining, BaselineOnly };

std::string_view to_string(RunMode m);
RunMode parse_run_mode(std::string_view name);  // "serm" | "self-training" | "baseline"

struct BackendSpec {
  enum class Kind { Mock, Http };
  std::string id;
  Kind kind = Kind::Mock;
  double path_error_rate = 0.2;  // mock only
  HttpBackendOptions http;       // http only
};

struct RunConfig {
  std::string output_dir;
  std::string run_id;  // empty: "<mode>-seed<seed>"
  RunMode mode = RunMode::SERM;
  int iterations = 3;
  std::uint64_t seed = 7;
  double self_label_noise = 0.0;  // self-training label corruption rate
  std::size_t max_workers = 1;
  TrainOptions training;
  TrainOptions click_training{200, 1.0};
  MinerConfig miner;
  WorldConfig world;
  int annotator_paths = 3;
  std::vector<BackendSpec> backends{{"mock-a", BackendSpec::Kind::Mock, 0.2, {}},
                                    {"mock-b", BackendSpec::Kind::Mock, 0.2, {}}};

  std::string effective_run_id() const;
  void validate() const;
};

// Strict parse of the config file. `output_dir` is required.
RunConfig run_config_from_json(const Json& j);
// Everything except output_dir and run_id, which do not affect results.
Json to_json(const RunConfig& c);

// argmax label (lowest on ties), with each label replaced by a uniformly drawn
// different label with probability `noise` (seeded per pair).
std::vector<LabeledPair> self_label(const std::vector<MinedCandidate>& candidates, const RelevanceModel& model,
                                    int iteration, double noise = 0.0, std::uint64_t seed = 0);

struct IterationManifest {
  int iteration = 0;
  Json body;               // manifest.json contents
  std::string hash;        // sha256 of the canonical manifest bytes
  MetricBlock metrics;
  std::size_t mined = 0;
  std::size_t annotated = 0;
  std::size_t rejected = 0;
  double wall_seconds = 0.0;  // kept out of the manifest, see timing.json
};

struct RunResult {
  std::filesystem::path run_dir;
  std::vector<IterationManifest> manifests;
  Json report;
};

/// Generates the world, trains the iteration-0 model on the SFT data and runs
/// the configured iterations, writing artifacts under
/// <output_dir>/run/<run_id>/. Throws UnsafeOverwrite when that directory is
/// non-empty and `force` is false. Artifacts of completed iterations remain on
/// disk when a later step throws.
RunResult run(const RunConfig& config, bool force = false);

// Reads <run_dir>/report.json and every manifest it references. Throws
// CorruptArtifact naming the offending file.
struct LoadedRun {
  std::string run_id;
  std::string mode;
  std::vector<std::pair<int, MetricBlock>> iterations;
};
LoadedRun load_run(const std::filesystem::path& run_dir);

}  // namespace serm
