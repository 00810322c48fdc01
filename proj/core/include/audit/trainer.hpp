#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "audit/config.hpp"
#include "audit/grpo.hpp"
#include "audit/pipeline.hpp"
#include "audit/pool.hpp"

namespace audit {

struct Checkpoint {
  std::string id;  // ckpt-NNNNNN
  int step = 0;
  AuditorPolicy policy;
  std::vector<std::string> strategies;  // StrategyId strings, aligned with logits
  TrainSchedule schedule;
  std::string config_hash;
};

void to_json(nlohmann::json& j, const Checkpoint& c);
void from_json(const nlohmann::json& j, Checkpoint& c);

std::string checkpoint_id(int step);
// Writes atomically (temp file + rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// FNV-1a of the file bytes.
std::string file_hash(const std::filesystem::path& path);

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // required
  std::filesystem::path step_log;  // JSONL of StepStats; empty = none
  std::filesystem::path feed;      // remote-auditor training feed; empty = <checkpoint_dir>/feed.jsonl
  RunWriter* run = nullptr;        // per-attempt and checkpoint events
  std::optional<std::filesystem::path> resume;  // resume.json from an aborted run
  std::function<void(const StepStats&, const AuditorPolicy&)> on_step;
};

struct TrainResult {
  std::string initial_checkpoint;          // untrained policy, step 0
  std::vector<std::string> checkpoint_ids;  // every checkpoint_every steps and the final step
  std::vector<std::filesystem::path> checkpoint_paths;
  AuditorPolicy policy;
  std::vector<StepStats> stats;
};

// GRPO over the pool. Each step draws batch_size_groups contexts, samples
// group_size strategies per context from the current policy, realizes and
// scores them, normalizes rewards within each group and updates. Samples
// without an accepted record are excluded; groups left with fewer than two
// samples are skipped. A step in which every attempt hits an unavailable
// backend writes <checkpoint_dir>/resume.json and throws BackendUnavailable.
TrainResult train(Runtime& rt, const std::vector<PoolItem>& pool, const TrainOptions& options);

}  // namespace audit
