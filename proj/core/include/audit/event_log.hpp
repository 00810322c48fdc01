#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "audit/divergence.hpp"
#include "audit/exemplar.hpp"
#include "audit/mining.hpp"

namespace audit {

enum class EventType {
  RunStarted,
  AttemptFailed,
  ExemplarCreated,
  RecordScored,
  CaseOpened,
  VerdictSet,
  CheckpointWritten,
  DatasetEmitted,
  RunFinished
};

std::string_view to_string(EventType t);
EventType event_type_from_string(std::string_view s);

struct Event {
  std::uint64_t seq = 0;
  std::string run_id;
  EventType type = EventType::RunStarted;
  nlohmann::json data;
};

// Checksum of one event: FNV-1a over the canonical dump of {seq, run_id,
// type, data}.
std::string event_checksum(const Event& e);
std::string encode_event(const Event& e);

// Append-only JSONL log, one event per line. Sequence numbers start at 1.
// Appends from several processes are serialized with an advisory file lock;
// each writer re-reads the tail when the file grew behind its back.
class EventLog {
 public:
  EventLog(std::filesystem::path path, std::string run_id);

  Event append(EventType type, nlohmann::json data);
  const std::filesystem::path& path() const { return path_; }
  const std::string& run_id() const { return run_id_; }
  std::uint64_t last_seq() const { return last_seq_; }

 private:
  void sync_tail();

  std::filesystem::path path_;
  std::string run_id_;
  std::uint64_t last_seq_ = 0;
  std::uintmax_t known_size_ = 0;
  std::mutex mu_;
};

enum class RunStatus { Running, Completed, Failed };
std::string_view to_string(RunStatus s);

struct RunCounters {
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  std::size_t failures = 0;
  friend bool operator==(const RunCounters&, const RunCounters&) = default;
};

// Everything derived from one run's log.
struct RunState {
  std::string id;
  std::string kind;  // train, audit, bootstrap
  std::string created_at;
  std::string config_hash;
  RunStatus status = RunStatus::Running;
  RunCounters counters;
  std::vector<Exemplar> exemplars;
  std::vector<DisagreementRecord> records;
  std::vector<FailureCase> cases;
  std::vector<nlohmann::json> checkpoints;
  std::vector<nlohmann::json> datasets;
  std::uint64_t last_seq = 0;
  std::uintmax_t offset = 0;  // bytes of the log consumed
  std::size_t lines = 0;      // complete lines consumed

  std::map<std::string, std::size_t> exemplar_index;
  std::map<std::string, std::size_t> record_index;
  std::map<std::string, std::size_t> case_index;

  // Applies one event. Throws CorruptLogError when the sequence breaks.
  void apply(const Event& e, std::size_t position);
  const Exemplar* exemplar(const std::string& id) const;
  const DisagreementRecord* record(const std::string& id) const;
  const FailureCase* find_case(const std::string& id) const;
  RunReport report(std::size_t top_n = 10) const;
  nlohmann::json summary() const;
  nlohmann::json to_json() const;
  static RunState from_json(const nlohmann::json& j);
  std::string state_hash() const;
};

// Applies the log bytes that follow state.offset. A final line without a
// newline is a torn write and stays unconsumed. Throws CorruptLogError(line
// index) on a bad checksum, a sequence gap or an unparseable complete line.
void apply_log_text(RunState& state, std::string_view tail);

// Full replay from the first byte.
RunState replay_log(const std::filesystem::path& path);

// Snapshot files: runs/{id}/snapshots/{seq}.json.
void write_snapshot(const std::filesystem::path& run_dir, const RunState& state);
std::optional<RunState> latest_snapshot(const std::filesystem::path& run_dir);

// Replay starting from the newest usable snapshot.
RunState load_run(const std::filesystem::path& run_dir);

}  // namespace audit
