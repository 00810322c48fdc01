#include "audit/event_log.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "audit/error.hpp"
#include "audit/util.hpp"

namespace audit {

namespace fs = std::filesystem;

namespace {

constexpr std::pair<EventType, std::string_view> kEventNames[] = {
    {EventType::RunStarted, "run_started"},
    {EventType::AttemptFailed, "attempt_failed"},
    {EventType::ExemplarCreated, "exemplar_created"},
    {EventType::RecordScored, "record_scored"},
    {EventType::CaseOpened, "case_opened"},
    {EventType::VerdictSet, "verdict_set"},
    {EventType::CheckpointWritten, "checkpoint_written"},
    {EventType::DatasetEmitted, "dataset_emitted"},
    {EventType::RunFinished, "run_finished"},
};

std::string read_file(const fs::path& p, std::uintmax_t from = 0) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  in.seekg(static_cast<std::streamoff>(from));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json checksum_body(const Event& e) {
  return {{"seq", e.seq}, {"run_id", e.run_id}, {"type", std::string(to_string(e.type))}, {"data", e.data}};
}

class FileLock {
 public:
  explicit FileLock(const fs::path& p) {
    fd_ = ::open(p.c_str(), O_RDWR | O_CREAT | O_APPEND, 0644);
    if (fd_ < 0) throw Error(ErrorCode::FormatError, "cannot open event log '" + p.string() + "'");
    ::flock(fd_, LOCK_EX);
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  int fd() const { return fd_; }

 private:
  int fd_;
};

}  // namespace

std::string_view to_string(EventType t) {
  for (const auto& [type, name] : kEventNames)
    if (type == t) return name;
  return "run_started";
}

EventType event_type_from_string(std::string_view s) {
  for (const auto& [type, name] : kEventNames)
    if (name == s) return type;
  throw Error(ErrorCode::FormatError, "unknown event type '" + std::string(s) + "'");
}

std::string event_checksum(const Event& e) { return hex64(fnv1a64(checksum_body(e).dump())); }

std::string encode_event(const Event& e) {
  auto j = checksum_body(e);
  j["checksum"] = event_checksum(e);
  return j.dump() + "\n";
}

EventLog::EventLog(fs::path path, std::string run_id) : path_(std::move(path)), run_id_(std::move(run_id)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  FileLock lock(path_);
  sync_tail();
}

void EventLog::sync_tail() {
  std::error_code ec;
  const auto size = fs::file_size(path_, ec);
  if (ec || size == known_size_) return;
  std::string text = read_file(path_, 0);
  // A torn final line from a crashed writer is dropped before appending.
  const auto last_nl = text.find_last_of('\n');
  const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
  if (keep < text.size()) {
    fs::resize_file(path_, keep);
    text.resize(keep);
  }
  known_size_ = keep;
  last_seq_ = 0;
  if (keep == 0) return;
  const auto prev_nl = keep >= 2 ? text.find_last_of('\n', keep - 2) : std::string::npos;
  const std::size_t start = prev_nl == std::string::npos ? 0 : prev_nl + 1;
  try {
    last_seq_ = nlohmann::json::parse(text.substr(start, keep - start)).at("seq").get<std::uint64_t>();
  } catch (const nlohmann::json::exception&) {
    throw CorruptLogError(std::count(text.begin(), text.end(), '\n') - 1, "unreadable tail of event log");
  }
}

Event EventLog::append(EventType type, nlohmann::json data) {
  std::lock_guard guard(mu_);
  FileLock lock(path_);
  sync_tail();
  Event e{last_seq_ + 1, run_id_, type, std::move(data)};
  const std::string line = encode_event(e);
  std::size_t done = 0;
  while (done < line.size()) {
    const auto n = ::write(lock.fd(), line.data() + done, line.size() - done);
    if (n <= 0) throw Error(ErrorCode::FormatError, "short write to event log");
    done += static_cast<std::size_t>(n);
  }
  last_seq_ = e.seq;
  known_size_ += line.size();
  return e;
}

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Running: return "running";
    case RunStatus::Completed: return "completed";
    case RunStatus::Failed: return "failed";
  }
  return "running";
}

namespace {

RunStatus run_status_from_string(std::string_view s) {
  if (s == "completed") return RunStatus::Completed;
  if (s == "failed") return RunStatus::Failed;
  return RunStatus::Running;
}

}  // namespace

void RunState::apply(const Event& e, std::size_t position) {
  if (e.seq != last_seq + 1) throw CorruptLogError(position, "sequence gap");
  if (!id.empty() && e.run_id != id) throw CorruptLogError(position, "foreign run id");
  const auto& d = e.data;
  try {
    switch (e.type) {
      case EventType::RunStarted: {
        std::string k = d.value("kind", "");
        std::string at = d.value("created_at", "");
        std::string h = d.value("config_hash", "");
        id = e.run_id;
        kind = std::move(k);
        created_at = std::move(at);
        config_hash = std::move(h);
        break;
      }
      case EventType::AttemptFailed:
        ++counters.attempts;
        break;
      case EventType::ExemplarCreated: {
        auto ex = d.at("exemplar").get<Exemplar>();
        ++counters.attempts;
        exemplar_index[ex.id] = exemplars.size();
        exemplars.push_back(std::move(ex));
        break;
      }
      case EventType::RecordScored: {
        auto r = d.at("record").get<DisagreementRecord>();
        if (r.rewardable()) ++counters.accepted;
        record_index[r.id] = records.size();
        records.push_back(std::move(r));
        break;
      }
      case EventType::CaseOpened: {
        auto c = d.at("case").get<FailureCase>();
        ++counters.failures;
        case_index[c.id] = cases.size();
        cases.push_back(std::move(c));
        break;
      }
      case EventType::VerdictSet: {
        auto v = d.at("verdict").get<Verdict>();
        auto it = case_index.find(v.case_id);
        if (it == case_index.end()) throw CorruptLogError(position, "verdict for unknown case");
        cases[it->second].verdict = v;
        cases[it->second].status = CaseStatus::Adjudicated;
        break;
      }
      case EventType::CheckpointWritten:
        checkpoints.push_back(d);
        break;
      case EventType::DatasetEmitted:
        datasets.push_back(d);
        break;
      case EventType::RunFinished:
        status = run_status_from_string(d.value("status", std::string("completed")));
        break;
    }
  } catch (const nlohmann::json::exception& ex) {
    throw CorruptLogError(position, std::string("malformed event payload: ") + ex.what());
  } catch (const CorruptLogError&) {
    throw;
  } catch (const Error& ex) {
    throw CorruptLogError(position, ex.what());
  }
  last_seq = e.seq;
}

const Exemplar* RunState::exemplar(const std::string& eid) const {
  auto it = exemplar_index.find(eid);
  return it == exemplar_index.end() ? nullptr : &exemplars[it->second];
}

const DisagreementRecord* RunState::record(const std::string& rid) const {
  auto it = record_index.find(rid);
  return it == record_index.end() ? nullptr : &records[it->second];
}

const FailureCase* RunState::find_case(const std::string& cid) const {
  auto it = case_index.find(cid);
  return it == case_index.end() ? nullptr : &cases[it->second];
}

RunReport RunState::report(std::size_t top_n) const { return build_report(id, counters.attempts, cases, top_n); }

nlohmann::json RunState::summary() const {
  return {{"id", id},
          {"kind", kind},
          {"created_at", created_at},
          {"config_hash", config_hash},
          {"status", std::string(to_string(status))},
          {"counters", {{"attempts", counters.attempts}, {"accepted", counters.accepted}, {"failures", counters.failures}}},
          {"checkpoints", checkpoints},
          {"datasets", datasets}};
}

nlohmann::json RunState::to_json() const {
  auto j = summary();
  j["exemplars"] = exemplars;
  j["records"] = records;
  j["cases"] = cases;
  j["last_seq"] = last_seq;
  j["offset"] = offset;
  j["lines"] = lines;
  return j;
}

RunState RunState::from_json(const nlohmann::json& j) {
  RunState s;
  s.id = j.at("id").get<std::string>();
  s.kind = j.value("kind", "");
  s.created_at = j.value("created_at", "");
  s.config_hash = j.value("config_hash", "");
  s.status = run_status_from_string(j.value("status", "running"));
  const auto& c = j.at("counters");
  s.counters = {c.at("attempts").get<std::size_t>(), c.at("accepted").get<std::size_t>(),
                c.at("failures").get<std::size_t>()};
  s.checkpoints = j.value("checkpoints", std::vector<nlohmann::json>{});
  s.datasets = j.value("datasets", std::vector<nlohmann::json>{});
  for (const auto& e : j.at("exemplars")) {
    s.exemplar_index[e.at("id").get<std::string>()] = s.exemplars.size();
    s.exemplars.push_back(e.get<Exemplar>());
  }
  for (const auto& r : j.at("records")) {
    s.record_index[r.at("id").get<std::string>()] = s.records.size();
    s.records.push_back(r.get<DisagreementRecord>());
  }
  for (const auto& k : j.at("cases")) {
    s.case_index[k.at("id").get<std::string>()] = s.cases.size();
    s.cases.push_back(k.get<FailureCase>());
  }
  s.last_seq = j.at("last_seq").get<std::uint64_t>();
  s.offset = j.at("offset").get<std::uintmax_t>();
  s.lines = j.at("lines").get<std::size_t>();
  return s;
}

std::string RunState::state_hash() const { return hex64(fnv1a64(to_json().dump())); }

void apply_log_text(RunState& state, std::string_view tail) {
  std::size_t pos = 0;
  while (pos < tail.size()) {
    const auto nl = tail.find('\n', pos);
    if (nl == std::string_view::npos) break;  // torn final line
    const std::string_view line = tail.substr(pos, nl - pos);
    const std::size_t index = state.lines;
    Event e;
    std::string checksum;
    try {
      auto j = nlohmann::json::parse(line);
      e.seq = j.at("seq").get<std::uint64_t>();
      e.run_id = j.at("run_id").get<std::string>();
      e.type = event_type_from_string(j.at("type").get<std::string>());
      e.data = j.at("data");
      checksum = j.at("checksum").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw CorruptLogError(index, "unparseable event");
    } catch (const Error&) {
      throw CorruptLogError(index, "unknown event type");
    }
    if (checksum != event_checksum(e)) throw CorruptLogError(index, "checksum mismatch");
    state.apply(e, index);
    ++state.lines;
    state.offset += nl + 1 - pos;
    pos = nl + 1;
  }
}

RunState replay_log(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::NotFound, "no event log at '" + path.string() + "'");
  RunState state;
  apply_log_text(state, read_file(path));
  return state;
}

void write_snapshot(const fs::path& run_dir, const RunState& state) {
  const fs::path dir = run_dir / "snapshots";
  fs::create_directories(dir);
  char name[32];
  std::snprintf(name, sizeof(name), "%012llu.json", static_cast<unsigned long long>(state.last_seq));
  const fs::path tmp = dir / (std::string(name) + ".tmp");
  {
    std::ofstream out(tmp);
    out << state.to_json().dump() << "\n";
    if (!out) throw Error(ErrorCode::FormatError, "cannot write snapshot");
  }
  fs::rename(tmp, dir / name);
}

std::optional<RunState> latest_snapshot(const fs::path& run_dir) {
  const fs::path dir = run_dir / "snapshots";
  if (!fs::is_directory(dir)) return std::nullopt;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.rbegin(), files.rend());
  for (const auto& f : files) {
    try {
      return RunState::from_json(nlohmann::json::parse(read_file(f)));
    } catch (const std::exception&) {
      continue;
    }
  }
  return std::nullopt;
}

RunState load_run(const fs::path& run_dir) {
  const fs::path log = run_dir / "events.jsonl";
  if (!fs::exists(log)) throw Error(ErrorCode::NotFound, "no event log in '" + run_dir.string() + "'");
  const std::string text = read_file(log);
  if (auto snap = latest_snapshot(run_dir)) {
    // Usable only when the log still holds every byte the snapshot consumed.
    if (snap->offset <= text.size() && (snap->offset == 0 || text[snap->offset - 1] == '\n')) {
      apply_log_text(*snap, std::string_view(text).substr(snap->offset));
      return std::move(*snap);
    }
  }
  RunState state;
  apply_log_text(state, text);
  return state;
}

}  // namespace audit
