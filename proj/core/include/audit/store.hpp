#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "audit/event_log.hpp"

namespace audit {

// Storage root layout:
//   runs/{id}/events.jsonl, runs/{id}/snapshots/, runs/{id}/images/
//   checkpoints/{run}/ckpt-NNNNNN.json
//   datasets/
class Store {
 public:
  explicit Store(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path run_dir(const std::string& run_id) const { return root_ / "runs" / run_id; }
  std::filesystem::path checkpoints_dir() const { return root_ / "checkpoints"; }
  std::filesystem::path datasets_dir() const { return root_ / "datasets"; }

  std::vector<std::string> run_ids() const;
  bool has_run(const std::string& run_id) const;

  // Current state of a run, tailing any events appended since the last
  // call. Throws Error(NotFound) for unknown runs.
  std::shared_ptr<const RunState> run(const std::string& run_id);

  // Case ids embed their run id: "<run>-cNNNNNN".
  static std::string case_id(const std::string& run_id, std::size_t ordinal);
  static std::optional<std::string> run_of_case(const std::string& case_id);

  enum class VerdictOutcome { Created, Unchanged, Conflict, NotFound };
  struct VerdictResult {
    VerdictOutcome outcome = VerdictOutcome::NotFound;
    std::optional<FailureCase> state;
  };
  // Writes are serialized. Re-submitting the active label is a no-op; a
  // different label needs `force`.
  VerdictResult set_verdict(const std::string& case_id, VerdictLabel label, const std::string& annotator,
                            bool force, std::int64_t timestamp_ms);

  struct CasePage {
    std::vector<FailureCase> cases;
    std::size_t next_cursor = 0;  // position after the last case examined
    bool has_more = false;
  };
  // Cursor positions index the run's append-only case sequence, so pages
  // stay stable while cases append.
  CasePage list_cases(const std::string& run_id, std::optional<CaseStatus> status, std::size_t limit,
                      std::size_t cursor);

 private:
  std::filesystem::path root_;
  mutable std::shared_mutex cache_mu_;
  std::map<std::string, std::shared_ptr<const RunState>> cache_;
  std::mutex write_mu_;
};

}  // namespace audit
