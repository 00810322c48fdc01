#include "audit/store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "audit/error.hpp"

namespace audit {

namespace fs = std::filesystem;

Store::Store(fs::path root) : root_(std::move(root)) {}

std::vector<std::string> Store::run_ids() const {
  std::vector<std::string> ids;
  const fs::path runs = root_ / "runs";
  if (!fs::is_directory(runs)) return ids;
  for (const auto& e : fs::directory_iterator(runs))
    if (fs::exists(e.path() / "events.jsonl")) ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool Store::has_run(const std::string& run_id) const {
  return !run_id.empty() && run_id.find('/') == std::string::npos && run_id != ".." &&
         fs::exists(run_dir(run_id) / "events.jsonl");
}

std::shared_ptr<const RunState> Store::run(const std::string& run_id) {
  if (!has_run(run_id)) throw Error(ErrorCode::NotFound, "unknown run '" + run_id + "'");
  const fs::path log = run_dir(run_id) / "events.jsonl";
  const auto size = fs::file_size(log);
  {
    std::shared_lock lock(cache_mu_);
    auto it = cache_.find(run_id);
    if (it != cache_.end() && it->second->offset == size) return it->second;
  }
  std::unique_lock lock(cache_mu_);
  auto it = cache_.find(run_id);
  std::shared_ptr<RunState> next;
  if (it != cache_.end() && it->second->offset <= size) {
    next = std::make_shared<RunState>(*it->second);
    std::ifstream in(log, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(next->offset));
    const std::string tail{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    apply_log_text(*next, tail);
  } else {
    next = std::make_shared<RunState>(load_run(run_dir(run_id)));
  }
  cache_[run_id] = next;
  return next;
}

std::string Store::case_id(const std::string& run_id, std::size_t ordinal) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "-c%06zu", ordinal);
  return run_id + buf;
}

std::optional<std::string> Store::run_of_case(const std::string& cid) {
  const auto pos = cid.rfind("-c");
  if (pos == std::string::npos || pos == 0) return std::nullopt;
  return cid.substr(0, pos);
}

Store::VerdictResult Store::set_verdict(const std::string& cid, VerdictLabel label, const std::string& annotator,
                                        bool force, std::int64_t timestamp_ms) {
  std::lock_guard guard(write_mu_);
  auto run_id = run_of_case(cid);
  if (!run_id || !has_run(*run_id)) return {};
  auto state = run(*run_id);
  const FailureCase* c = state->find_case(cid);
  if (!c) return {};
  if (c->verdict && c->verdict->label == label) return {VerdictOutcome::Unchanged, *c};
  if (c->verdict && !force) return {VerdictOutcome::Conflict, *c};

  Verdict v{cid, label, annotator, timestamp_ms};
  EventLog log(run_dir(*run_id) / "events.jsonl", *run_id);
  log.append(EventType::VerdictSet, {{"verdict", v}, {"force", force}});
  auto updated = run(*run_id);
  return {VerdictOutcome::Created, *updated->find_case(cid)};
}

Store::CasePage Store::list_cases(const std::string& run_id, std::optional<CaseStatus> status, std::size_t limit,
                                  std::size_t cursor) {
  auto state = run(run_id);
  CasePage page;
  std::size_t i = std::min(cursor, state->cases.size());
  for (; i < state->cases.size() && page.cases.size() < limit; ++i) {
    const auto& c = state->cases[i];
    if (status && c.status != *status) continue;
    page.cases.push_back(c);
  }
  page.next_cursor = i;
  page.has_more = i < state->cases.size();
  return page;
}

}  // namespace audit
