#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "audit/config.hpp"
#include "audit/event_log.hpp"
#include "audit/grpo.hpp"
#include "audit/pool.hpp"
#include "audit/store.hpp"

namespace audit {

// Inverse-CDF draw from the masked policy; u in [0, 1).
std::size_t sample_strategy(const std::vector<double>& probabilities, double u);

// Deterministic run id: "<kind>-<12 hex>" from the kind, config hash, seed
// and any extra key (checkpoint, pool, ...).
std::string make_run_id(std::string_view kind, std::string_view config_hash, std::uint64_t seed,
                        std::string_view extra = {});

std::string utc_timestamp();

// Event writer for one run under a store. With `fresh`, an existing run
// directory of the same id is replaced.
class RunWriter {
 public:
  RunWriter(Store& store, std::string run_id, bool fresh);

  const std::string& run_id() const { return run_id_; }
  Store& store() { return store_; }
  const std::filesystem::path& dir() const { return dir_; }
  EventLog& log() { return *log_; }
  Event emit(EventType type, nlohmann::json data) { return log_->append(type, std::move(data)); }
  void start(std::string_view kind, const std::string& config_hash, nlohmann::json params);
  // Emits run_finished and writes a snapshot.
  void finish(RunStatus status);

 private:
  Store& store_;
  std::string run_id_;
  std::filesystem::path dir_;
  std::unique_ptr<EventLog> log_;
};

// Outcome of realizing and scoring one exemplar.
struct Attempt {
  std::size_t strategy = 0;
  double logprob = 0.0;
  std::optional<Exemplar> exemplar;
  std::optional<DisagreementRecord> record;
  std::string error;
  bool backend_down = false;

  bool accepted() const { return record && record->rewardable(); }
  double reward() const { return record ? record->signal : 0.0; }
};

// Samples a strategy for `item` from `policy` using `u`, realizes it with
// `seed` and scores it. Never throws for per-exemplar failures.
Attempt run_attempt(Runtime& rt, const AuditorPolicy& policy, const PoolItem& item, double u, std::uint64_t seed,
                    const std::string& exemplar_id, const std::optional<std::string>& checkpoint_id = std::nullopt);

// Emits exemplar_created/attempt_failed and record_scored for one attempt.
void log_attempt(RunWriter& run, const Attempt& a, const std::string& attempt_id);

void register_pool(Runtime& rt, const std::vector<PoolItem>& pool);

struct AuditOptions {
  std::size_t n = 100;
  std::uint64_t seed = 0;
  std::optional<std::string> checkpoint_id;
};

struct AuditResult {
  std::string run_id;
  RunReport report;
  std::vector<Attempt> attempts;
};

// Single-pass discovery: n attempts with a fixed policy, failure cases
// opened for accepted s=1 records (categorized, deduplicated within the
// run). Throws EmptyRun for n = 0, EmptyPool for an empty pool and
// BackendUnavailable when no attempt reached its backends.
AuditResult run_audit(Runtime& rt, const AuditorPolicy& policy, const std::vector<PoolItem>& pool,
                      const AuditOptions& options, RunWriter& run);

}  // namespace audit
