#include "audit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>

#include "audit/error.hpp"
#include "audit/parallel.hpp"
#include "audit/util.hpp"

namespace audit {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kContextDomain = 0xC7;
constexpr std::uint64_t kStrategyDomain = 0xA1;
constexpr std::size_t kChunk = 256;

std::string numbered(std::string_view prefix, std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%06zu", i);
  return std::string(prefix) + buf;
}

}  // namespace

std::size_t sample_strategy(const std::vector<double>& probabilities, double u) {
  double acc = 0.0;
  std::size_t last = probabilities.size();
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i] <= 0.0) continue;
    last = i;
    acc += probabilities[i];
    if (u < acc) return i;
  }
  if (last == probabilities.size()) throw Error(ErrorCode::ProtocolError, "policy has no allowed strategy");
  return last;
}

std::string make_run_id(std::string_view kind, std::string_view config_hash, std::uint64_t seed,
                        std::string_view extra) {
  std::string key(kind);
  key += '|';
  key += config_hash;
  key += '|';
  key += std::to_string(seed);
  key += '|';
  key += extra;
  return std::string(kind) + "-" + hex64(fnv1a64(key)).substr(0, 12);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunWriter::RunWriter(Store& store, std::string run_id, bool fresh)
    : store_(store), run_id_(std::move(run_id)), dir_(store.run_dir(run_id_)) {
  if (fresh && fs::exists(dir_)) fs::remove_all(dir_);
  fs::create_directories(dir_ / "images");
  log_ = std::make_unique<EventLog>(dir_ / "events.jsonl", run_id_);
}

void RunWriter::start(std::string_view kind, const std::string& config_hash, nlohmann::json params) {
  emit(EventType::RunStarted, {{"kind", std::string(kind)},
                               {"config_hash", config_hash},
                               {"created_at", utc_timestamp()},
                               {"params", std::move(params)}});
}

void RunWriter::finish(RunStatus status) {
  emit(EventType::RunFinished, {{"status", std::string(to_string(status))}});
  write_snapshot(dir_, *store_.run(run_id_));
}

Attempt run_attempt(Runtime& rt, const AuditorPolicy& policy, const PoolItem& item, double u, std::uint64_t seed,
                    const std::string& exemplar_id, const std::optional<std::string>& checkpoint_id) {
  Attempt a;
  const auto mask = rt.space().mask(rt.config().enabled, item.question.has_value());
  const auto probs = policy.probabilities(mask);
  a.strategy = sample_strategy(probs, u);
  a.logprob = std::log(probs[a.strategy]);
  try {
    Exemplar ex = rt.generator().realize(rt.space().at(a.strategy), item.image, item.question, seed, exemplar_id);
    ex.auditor_checkpoint = checkpoint_id;
    a.record = rt.scorer().score(ex);
    a.exemplar = std::move(ex);
    if (!a.record->error.empty() && a.record->error.find(to_string(ErrorCode::BackendUnavailable)) != std::string::npos)
      a.backend_down = true;
  } catch (const Error& e) {
    a.error = e.what();
    a.backend_down = e.code() == ErrorCode::BackendUnavailable;
  }
  return a;
}

void log_attempt(RunWriter& run, const Attempt& a, const std::string& attempt_id) {
  if (!a.exemplar) {
    run.emit(EventType::AttemptFailed, {{"attempt_id", attempt_id}, {"strategy", a.strategy}, {"error", a.error}});
    return;
  }
  run.emit(EventType::ExemplarCreated, {{"exemplar", *a.exemplar}});
  run.emit(EventType::RecordScored, {{"record", *a.record}});
}

void register_pool(Runtime& rt, const std::vector<PoolItem>& pool) {
  for (const auto& item : pool) rt.gateway().register_source(item.image);
}

AuditResult run_audit(Runtime& rt, const AuditorPolicy& policy, const std::vector<PoolItem>& pool,
                      const AuditOptions& options, RunWriter& run) {
  if (options.n == 0) throw Error(ErrorCode::EmptyRun, "audit needs at least one attempt");
  if (pool.empty()) throw Error(ErrorCode::EmptyPool, "image pool is empty");
  if (policy.logits.size() != rt.space().size())
    throw Error(ErrorCode::ConfigError, "checkpoint does not match the strategy space");
  register_pool(rt, pool);

  run.start("audit", rt.config().hash(),
            {{"n", options.n}, {"seed", options.seed}, {"checkpoint", options.checkpoint_id.value_or("")}});

  AuditResult result;
  result.run_id = run.run_id();
  std::map<std::string, std::vector<DedupItem>> kept;  // by lineage root
  std::size_t case_ordinal = 0;
  for (std::size_t begin = 0; begin < options.n; begin += kChunk) {
    const std::size_t end = std::min(options.n, begin + kChunk);
    std::vector<Attempt> chunk(end - begin);
    parallel_for(chunk.size(), rt.config().workers, [&](std::size_t k) {
      const std::size_t i = begin + k;
      const auto& item = pool[Rng(derive_seed(options.seed, i, kContextDomain)).below(pool.size())];
      const double u = Rng(derive_seed(options.seed, i, kStrategyDomain)).unit();
      chunk[k] = run_attempt(rt, policy, item, u, derive_seed(options.seed, i), numbered(run.run_id() + "-e", i),
                             options.checkpoint_id);
    });
    for (std::size_t k = 0; k < chunk.size(); ++k) {
      const Attempt& a = chunk[k];
      log_attempt(run, a, numbered(run.run_id() + "-e", begin + k));
      if (!a.accepted() || a.record->signal != 1) continue;
      const Exemplar& ex = *a.exemplar;
      auto cat = categorize(rt.gateway(), rt.config().summarizer, ex.question, a.record->target_answer,
                            *a.record->consensus);
      FailureCase c;
      c.id = Store::case_id(run.run_id(), ++case_ordinal);
      c.exemplar_id = ex.id;
      c.record_id = a.record->id;
      c.question = ex.question;
      c.image_root = ex.image_root;
      c.category = cat.category;
      c.root_cause = cat.root_cause;
      c.dedup_key = dedup_key(ex.question, ex.image_root);
      DedupItem item{ex.question, ex.image_root};
      auto& siblings = kept[ex.image_root];
      c.duplicate = std::any_of(siblings.begin(), siblings.end(),
                                [&](const DedupItem& k) { return is_duplicate(k, item); });
      if (!c.duplicate) siblings.push_back(std::move(item));
      run.emit(EventType::CaseOpened, {{"case", c}});
    }
    for (auto& a : chunk) result.attempts.push_back(std::move(a));
  }
  if (std::all_of(result.attempts.begin(), result.attempts.end(), [](const Attempt& a) { return a.backend_down; })) {
    run.finish(RunStatus::Failed);
    throw Error(ErrorCode::BackendUnavailable, "every attempt hit an unavailable backend");
  }
  run.finish(RunStatus::Completed);
  result.report = run.store().run(run.run_id())->report();
  return result;
}

}  // namespace audit
