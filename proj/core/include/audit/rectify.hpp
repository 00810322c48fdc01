#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "audit/config.hpp"
#include "audit/event_log.hpp"
#include "audit/pipeline.hpp"
#include "audit/pool.hpp"
#include "audit/trainer.hpp"

namespace audit {

enum class LabelSource { Original, EnsembleConsensus };
std::string_view to_string(LabelSource s);

struct Provenance {
  std::string auditor_checkpoint;
  std::string strategy;
  std::string run_id;
  std::string image_root;
};

struct DatasetRecord {
  std::string question;
  std::string image;
  std::string label;
  LabelSource label_source = LabelSource::EnsembleConsensus;
  Provenance provenance;
  std::string category;
};

void to_json(nlohmann::json& j, const DatasetRecord& r);
void from_json(const nlohmann::json& j, DatasetRecord& r);

// Accepted-consensus records of a run as pseudo-labeled dataset records, in
// log order. Category is the failure-case category when one was opened.
std::vector<DatasetRecord> generated_records(const RunState& run);

// Stable dedup on (question fingerprint, image lineage root).
std::vector<DatasetRecord> dedup_records(const std::vector<DatasetRecord>& records,
                                         double threshold = kNearDuplicateThreshold);

void write_jsonl(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);

struct MixtureManifest {
  std::size_t original_count = 0;
  std::size_t generated_count = 0;
  double ratio = 1.0;
  std::uint64_t shuffle_seed = 0;
  std::string output_uri;
  std::string run_id;
};

void to_json(nlohmann::json& j, const MixtureManifest& m);
void from_json(const nlohmann::json& j, MixtureManifest& m);
std::filesystem::path manifest_path(const std::filesystem::path& dataset);

// Strategy 1: originals plus round(ratio * originals) generated records,
// drawn after dedup and interleaved under the seed. Original lines are
// copied verbatim. Writes the dataset and a `.manifest.json` sidecar.
// Throws FormatError for a malformed original line and InsufficientGenerated
// when the run has too few usable records.
MixtureManifest build_augmented_mixture(const std::filesystem::path& original, const std::string& run_id,
                                        const std::vector<DatasetRecord>& generated, double ratio,
                                        std::uint64_t seed, const std::filesystem::path& output);

enum class ConvergenceStatus { Continue, Converged, BudgetExhausted };
std::string_view to_string(ConvergenceStatus s);

struct Convergence {
  std::vector<double> metric_history;
  double delta_threshold = 0.005;
  int max_iterations = 2;
};

struct BootstrapState {
  int iteration = 0;
  std::vector<std::string> checkpoint_ids;
  std::string pool_uri;
  std::vector<std::string> emitted_datasets;
  Convergence convergence;
};

void to_json(nlohmann::json& j, const BootstrapState& s);
void from_json(const nlohmann::json& j, BootstrapState& s);

// Appends new_metric to the history. Converged when it moved less than the
// threshold from the previous value; otherwise budget_exhausted once
// state.iteration reaches max_iterations.
ConvergenceStatus check_convergence(BootstrapState& state, double new_metric);

struct BootstrapOptions {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;  // datasets are written here
  std::filesystem::path journal;  // empty: inside the run directory, or <out_dir>/<stem>.journal
  RunWriter* run = nullptr;
};

struct BootstrapRound {
  std::filesystem::path dataset;
  std::size_t candidates = 0;  // accepted records before dedup
  std::size_t attempts = 0;
  double metric = 0.0;  // discovered-failure rate of the round
};

// Strategy 2, one round: every pool image x every checkpoint, one attempt
// each; accepted consensus records become pseudo-labeled records, which are
// aggregated, deduplicated and written. Completed pairs are journaled so an
// interrupted round resumes without redoing them. Increments
// state.iteration. Throws EmptyPool.
BootstrapRound bootstrap_round(Runtime& rt, BootstrapState& state, const std::vector<PoolItem>& pool,
                               const std::vector<Checkpoint>& checkpoints, const BootstrapOptions& options);

struct BootstrapResult {
  BootstrapState state;
  std::vector<BootstrapRound> rounds;
  ConvergenceStatus status = ConvergenceStatus::Continue;
};

// Rounds until converged or out of budget.
BootstrapResult run_bootstrap(Runtime& rt, BootstrapState state, const std::vector<PoolItem>& pool,
                              const std::vector<Checkpoint>& checkpoints, const BootstrapOptions& options);

}  // namespace audit
