#include <gtest/gtest.h>

#include <set>
#include <thread>

#include <httplib.h>

#include "audit/config.hpp"
#include "audit/error.hpp"
#include "audit/event_log.hpp"
#include "audit/http_api.hpp"
#include "audit/pipeline.hpp"
#include "audit/pool.hpp"
#include "audit/store.hpp"
#include "support.hpp"

using namespace audit;
using testing_support::TempDir;
using testing_support::lines_of;
using testing_support::slurp;
using testing_support::spit;
using json = nlohmann::json;

namespace {

FailureCase make_case(const std::string& run_id, std::size_t ordinal) {
  FailureCase c;
  c.id = Store::case_id(run_id, ordinal);
  c.exemplar_id = "e" + std::to_string(ordinal);
  c.record_id = "r" + std::to_string(ordinal);
  c.question = "How many apples are in the image? #" + std::to_string(ordinal);
  c.image_root = "src://" + std::to_string(ordinal);
  c.category = ordinal % 3 == 0 ? "color" : "counting";
  c.dedup_key = dedup_key(c.question, c.image_root);
  return c;
}

// A run with `attempts` attempts of which the first `cases` opened a case.
void seed_run(Store& store, const std::string& run_id, std::size_t attempts, std::size_t cases) {
  RunWriter w(store, run_id, true);
  w.start("audit", "hash", json::object());
  for (std::size_t i = 1; i <= attempts; ++i) {
    w.emit(EventType::AttemptFailed, {{"attempt_id", "a" + std::to_string(i)}, {"strategy", 0}, {"error", "x"}});
    if (i <= cases) w.emit(EventType::CaseOpened, {{"case", make_case(run_id, i)}});
  }
}

void append_cases(Store& store, const std::string& run_id, std::size_t from, std::size_t to) {
  EventLog log(store.run_dir(run_id) / "events.jsonl", run_id);
  for (std::size_t i = from; i <= to; ++i) log.append(EventType::CaseOpened, {{"case", make_case(run_id, i)}});
}

ApiRequest get(const std::string& path, std::map<std::string, std::string> query = {}) {
  return {"GET", path, std::move(query), "", ""};
}

ApiRequest post(const std::string& path, const std::string& body) { return {"POST", path, {}, body, ""}; }

// Rewrites line `index` of a log file through `fn`.
void edit_line(const std::filesystem::path& p, std::size_t index, const std::function<std::string(std::string)>& fn) {
  auto lines = lines_of(p);
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string l = i == index ? fn(lines[i]) : lines[i];
    if (!l.empty()) out += l + "\n";
  }
  spit(p, out);
}

std::size_t corrupt_position(const std::filesystem::path& p) {
  try {
    replay_log(p);
  } catch (const CorruptLogError& e) {
    return e.position();
  }
  ADD_FAILURE() << "no corruption detected";
  return SIZE_MAX;
}

}  // namespace

TEST(EventLog, SequenceChecksumAndReplay) {
  TempDir dir;
  Store store(dir.path());
  seed_run(store, "run-a", 10, 4);
  const auto path = store.run_dir("run-a") / "events.jsonl";
  const auto lines = lines_of(path);
  ASSERT_EQ(lines.size(), 15u);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto j = json::parse(lines[i]);
    EXPECT_EQ(j["seq"], i + 1);
    EXPECT_EQ(j["run_id"], "run-a");
    Event e{j["seq"], j["run_id"], event_type_from_string(j["type"].get<std::string>()), j["data"]};
    EXPECT_EQ(j["checksum"], event_checksum(e));
  }
  const auto a = replay_log(path);
  const auto b = replay_log(path);
  EXPECT_EQ(a.state_hash(), b.state_hash());
  EXPECT_EQ(a.counters.attempts, 10u);
  EXPECT_EQ(a.counters.failures, 4u);
  EXPECT_EQ(a.cases.size(), 4u);
  EXPECT_EQ(a.kind, "audit");
}

TEST(EventLog, ChecksumMismatchReportsIndex) {
  TempDir dir;
  Store store(dir.path());
  seed_run(store, "run-a", 6, 0);
  const auto path = store.run_dir("run-a") / "events.jsonl";
  edit_line(path, 3, [](std::string l) {
    auto j = json::parse(l);
    j["data"]["error"] = "tampered";
    return j.dump();
  });
  EXPECT_EQ(corrupt_position(path), 3u);
}

TEST(EventLog, GapReportsIndex) {
  TempDir dir;
  Store store(dir.path());
  seed_run(store, "run-a", 6, 0);
  const auto path = store.run_dir("run-a") / "events.jsonl";
  edit_line(path, 2, [](std::string) { return std::string(); });
  EXPECT_EQ(corrupt_position(path), 2u);
}

TEST(EventLog, GarbageLineReportsIndex) {
  TempDir dir;
  Store store(dir.path());
  seed_run(store, "run-a", 6, 0);
  const auto path = store.run_dir("run-a") / "events.jsonl";
  edit_line(path, 4, [](std::string) { return std::string("{not json"); });
  EXPECT_EQ(corrupt_position(path), 4u);
}

TEST(EventLog, TruncationYieldsPrefixState) {
  TempDir dir;
  Store store(dir.path());
  seed_run(store, "run-a", 8, 8);
  const auto path = store.run_dir("run-a") / "events.jsonl";
  const std::string full = slurp(path);
  std::vector<std::size_t> boundaries{0};
  for (std::size_t i = 0; i < full.size(); ++i)
    if (full[i] == '\n') boundaries.push_back(i + 1);
  for (std::size_t k = 0; k + 1 < boundaries.size(); ++k) {
    // Cut in the middle of event k: only the first k events apply.
    spit(path, full.substr(0, (boundaries[k] + boundaries[k + 1]) / 2));
    const auto s = replay_log(path);
    EXPECT_EQ(s.lines, k);
    EXPECT_EQ(s.last_seq, k);
    EXPECT_EQ(s.offset, boundaries[k]);
    std::size_t attempts = 0, cases = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const auto type = json::parse(full.substr(boundaries[i], boundaries[i + 1] - boundaries[i]))["type"];
      attempts += type == "attempt_failed";
      cases += type == "case_opened";
    }
    EXPECT_EQ(s.counters.attempts, attempts);
    EXPECT_EQ(s.counters.failures, cases);
  }
}

TEST(EventLog, SnapshotsResumeAndFallBack) {
  TempDir dir;
  Store store(dir.path());
  seed_run(store, "run-a", 5, 3);
  const auto run_dir = store.run_dir("run-a");
  write_snapshot(run_dir, replay_log(run_dir / "events.jsonl"));
  append_cases(store, "run-a", 4, 6);
  const auto full = replay_log(run_dir / "events.jsonl");
  EXPECT_EQ(load_run(run_dir).state_hash(), full.state_hash());
  EXPECT_EQ(full.cases.size(), 6u);

  // A snapshot ahead of a truncated log is ignored.
  write_snapshot(run_dir, full);
  const std::string text = slurp(run_dir / "events.jsonl");
  spit(run_dir / "events.jsonl", text.substr(0, text.size() / 2));
  EXPECT_EQ(load_run(run_dir).state_hash(), replay_log(run_dir / "events.jsonl").state_hash());
}

TEST(EventLog, ConcurrentWritersKeepSequence) {
  TempDir dir;
  const auto path = dir / "events.jsonl";
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      EventLog log(path, "run-c");  // one handle per writer, as separate processes would
      for (int i = 0; i < 100; ++i)
        log.append(EventType::AttemptFailed, {{"attempt_id", std::to_string(t) + "-" + std::to_string(i)}});
    });
  for (auto& th : threads) th.join();
  const auto s = replay_log(path);
  EXPECT_EQ(s.last_seq, 400u);
  EXPECT_EQ(s.counters.attempts, 400u);
}

TEST(Store, VerdictRules) {
  TempDir dir;
  Store store(dir.path());
  seed_run(store, "run-a", 4, 2);
  const auto id = Store::case_id("run-a", 1);
  EXPECT_EQ(Store::run_of_case(id), "run-a");
  auto r = store.set_verdict(id, VerdictLabel::TargetFailure, "ann", false, 5);
  EXPECT_EQ(r.outcome, Store::VerdictOutcome::Created);
  EXPECT_EQ(r.state->status, CaseStatus::Adjudicated);
  EXPECT_EQ(store.set_verdict(id, VerdictLabel::TargetFailure, "ann", false, 6).outcome,
            Store::VerdictOutcome::Unchanged);
  EXPECT_EQ(store.set_verdict(id, VerdictLabel::Ambiguous, "ann", false, 7).outcome, Store::VerdictOutcome::Conflict);
  r = store.set_verdict(id, VerdictLabel::Ambiguous, "boss", true, 8);
  EXPECT_EQ(r.outcome, Store::VerdictOutcome::Created);
  EXPECT_EQ(r.state->verdict->label, VerdictLabel::Ambiguous);
  EXPECT_EQ(store.set_verdict("run-a-c000099", VerdictLabel::Ambiguous, "a", false, 1).outcome,
            Store::VerdictOutcome::NotFound);
  EXPECT_EQ(store.set_verdict("nope", VerdictLabel::Ambiguous, "a", false, 1).outcome, Store::VerdictOutcome::NotFound);

  // The other case is untouched and the verdicts survive a cold replay.
  const auto s = replay_log(store.run_dir("run-a") / "events.jsonl");
  EXPECT_EQ(s.find_case(id)->verdict->annotator, "boss");
  EXPECT_FALSE(s.find_case(Store::case_id("run-a", 2))->verdict.has_value());
  EXPECT_THROW(store.run("missing"), Error);
  EXPECT_THROW(store.run("../x"), Error);
}

TEST(Api, PaginationVisitsEachPendingCaseOnce) {
  TempDir dir;
  Store store(dir.path());
  seed_run(store, "run-p", 25, 25);
  HttpApi api(store);
  std::multiset<std::string> seen;
  std::optional<std::string> cursor;
  int pages = 0;
  bool appended = false;
  for (;;) {
    std::map<std::string, std::string> q{{"status", "pending"}, {"limit", "10"}};
    if (cursor) q["cursor"] = *cursor;
    const auto r = api.handle(get("/runs/run-p/cases", q));
    ASSERT_EQ(r.status, 200);
    ++pages;
    for (const auto& c : r.body["cases"]) seen.insert(c["id"].get<std::string>());
    if (!appended) {
      append_cases(store, "run-p", 26, 30);
      appended = true;
    }
    if (r.body["next_cursor"].is_null()) {
      EXPECT_FALSE(r.body["has_more"].get<bool>());
      break;
    }
    cursor = r.body["next_cursor"].get<std::string>();
    ASSERT_LT(pages, 10);
  }
  for (std::size_t i = 1; i <= 25; ++i) EXPECT_EQ(seen.count(Store::case_id("run-p", i)), 1u) << i;
  for (const auto& id : seen) EXPECT_EQ(seen.count(id), 1u) << id;
  EXPECT_EQ(seen.size(), 30u);
}

TEST(Api, StatusFilterAndValidation) {
  TempDir dir;
  Store store(dir.path());
  seed_run(store, "run-a", 6, 6);
  HttpApi api(store, {}, [] { return std::int64_t{42}; });
  ASSERT_EQ(api.handle(post("/cases/" + Store::case_id("run-a", 2) + "/verdict", R"({"label":"ambiguous"})")).status,
            200);
  auto r = api.handle(get("/runs/run-a/cases", {{"status", "adjudicated"}}));
  ASSERT_EQ(r.body["cases"].size(), 1u);
  EXPECT_EQ(r.body["cases"][0]["verdict"]["timestamp"], 42);
  EXPECT_EQ(api.handle(get("/runs/run-a/cases", {{"status", "pending"}})).body["cases"].size(), 5u);
  EXPECT_EQ(api.handle(get("/runs/run-a/cases", {{"status", "done"}})).status, 422);
  EXPECT_EQ(api.handle(get("/runs/run-a/cases", {{"limit", "0"}})).status, 422);
  EXPECT_EQ(api.handle(get("/runs/run-a/cases", {{"limit", "501"}})).status, 422);
  EXPECT_EQ(api.handle(get("/runs/run-a/cases", {{"limit", "x"}})).status, 422);
  EXPECT_EQ(api.handle(get("/runs/run-a/cases", {{"cursor", "-1"}})).status, 422);
  EXPECT_EQ(api.handle(get("/runs/missing/cases")).status, 404);
  EXPECT_EQ(api.handle(get("/runs/missing")).status, 404);
  EXPECT_EQ(api.handle(get("/nowhere")).status, 404);
  EXPECT_EQ(api.handle({"DELETE", "/runs/run-a", {}, "", ""}).status, 405);
  EXPECT_EQ(api.handle(get("/healthz")).body["status"], "ok");
  const auto runs = api.handle(get("/runs"));
  ASSERT_EQ(runs.body["runs"].size(), 1u);
  EXPECT_EQ(runs.body["runs"][0]["counters"]["failures"], 6);
}

TEST(Api, VerdictRoundTripAndConflicts) {
  TempDir dir;
  Store store(dir.path());
  seed_run(store, "run-a", 4, 3);
  HttpApi api(store);
  const std::string id = Store::case_id("run-a", 1);
  const std::string url = "/cases/" + id + "/verdict";

  EXPECT_EQ(api.handle(post(url, "not json")).status, 422);
  EXPECT_EQ(api.handle(post(url, R"({"label":"wrong"})")).status, 422);
  EXPECT_EQ(api.handle(post(url, R"({"label":"ambiguous","annotator":5})")).status, 422);
  EXPECT_EQ(api.handle(post(url, R"({"label":"ambiguous","force":"yes"})")).status, 422);
  EXPECT_EQ(api.handle(post("/cases/run-a-c000099/verdict", R"({"label":"ambiguous"})")).status, 404);
  EXPECT_EQ(api.handle(get("/cases/run-a-c000099")).status, 404);

  auto r = api.handle(post(url, R"({"label":"target_failure","annotator":"kim"})"));
  ASSERT_EQ(r.status, 200);
  EXPECT_TRUE(r.body["changed"].get<bool>());
  r = api.handle(post(url, R"({"label":"target_failure","annotator":"kim"})"));
  EXPECT_EQ(r.status, 200);
  EXPECT_FALSE(r.body["changed"].get<bool>());
  r = api.handle(post(url, R"({"label":"unanswerable"})"));
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(r.body["case"]["verdict"]["label"], "target_failure");
  r = api.handle(post(url, R"({"label":"unanswerable","force":true})"));
  EXPECT_EQ(r.status, 200);

  const auto c = api.handle(get("/cases/" + id));
  ASSERT_EQ(c.status, 200);
  EXPECT_EQ(c.body["case"]["verdict"]["label"], "unanswerable");
  EXPECT_EQ(c.body["case"]["status"], "adjudicated");
  EXPECT_EQ(c.body["run_id"], "run-a");

  const auto rep = api.handle(get("/runs/run-a/report"));
  EXPECT_EQ(rep.body["verdicts"]["unanswerable"], 1);
  EXPECT_DOUBLE_EQ(rep.body["success_rate"].get<double>(), 3.0 / 4.0);
  EXPECT_DOUBLE_EQ(rep.body["success_rate_adjudicated"].get<double>(), 0.0);
}

TEST(Api, BearerToken) {
  TempDir dir;
  Store store(dir.path());
  seed_run(store, "run-a", 1, 1);
  HttpApi api(store, "s3cret");
  EXPECT_EQ(api.handle(get("/runs")).status, 401);
  auto req = get("/runs");
  req.authorization = "Bearer wrong";
  EXPECT_EQ(api.handle(req).status, 401);
  req.authorization = "Bearer s3cret";
  EXPECT_EQ(api.handle(req).status, 200);
  EXPECT_EQ(api.handle(get("/healthz")).status, 200);
}

TEST(Api, ReportMatchesRecountFromLog) {
  TempDir dir;
  Store store(dir.path());
  Runtime rt(mock_config(9));
  const auto pool = make_mock_pool(40, 9);
  RunWriter w(store, "audit-x", true);
  AuditOptions opt;
  opt.n = 200;
  opt.seed = 9;
  run_audit(rt, AuditorPolicy::uniform(rt.space().size()), pool, opt, w);
  w.finish(RunStatus::Completed);

  std::size_t attempts = 0;
  std::vector<FailureCase> cases;
  for (const auto& l : lines_of(store.run_dir("audit-x") / "events.jsonl")) {
    const auto j = json::parse(l);
    if (j["type"] == "exemplar_created" || j["type"] == "attempt_failed") ++attempts;
    if (j["type"] == "case_opened") cases.push_back(j["data"]["case"].get<FailureCase>());
  }
  ASSERT_EQ(attempts, 200u);
  ASSERT_FALSE(cases.empty());
  HttpApi api(store);
  const auto rep = api.handle(get("/runs/audit-x/report"));
  ASSERT_EQ(rep.status, 200);
  EXPECT_EQ(rep.body["success_rate"].get<double>(), search_success_rate(attempts, cases, false));
  EXPECT_EQ(rep.body["attempts"], attempts);

  const auto c = api.handle(get("/cases/" + cases[0].id));
  ASSERT_EQ(c.status, 200);
  EXPECT_EQ(c.body["exemplar"]["id"], cases[0].exemplar_id);
  EXPECT_EQ(c.body["record"]["signal"], 1);
  EXPECT_GE(c.body["lineage"].size(), 1u);
}

TEST(Api, ServesOverHttp) {
  TempDir dir;
  Store store(dir.path());
  seed_run(store, "run-a", 3, 2);
  HttpApi api(store, "tok");
  const int port = api.bind_any("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { api.listen_after_bind(); });
  httplib::Client cli("127.0.0.1", port);
  auto h = cli.Get("/healthz");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);
  EXPECT_EQ(cli.Get("/runs")->status, 401);
  httplib::Headers auth{{"Authorization", "Bearer tok"}};
  auto page = cli.Get("/runs/run-a/cases?status=pending&limit=1", auth);
  ASSERT_TRUE(page);
  EXPECT_EQ(page->status, 200);
  const auto body = json::parse(page->body);
  EXPECT_EQ(body["cases"].size(), 1u);
  EXPECT_EQ(body["next_cursor"], "1");
  auto v = cli.Post("/cases/" + Store::case_id("run-a", 1) + "/verdict", auth, R"({"label":"ambiguous"})",
                    "application/json");
  ASSERT_TRUE(v);
  EXPECT_EQ(v->status, 200);
  api.stop();
  th.join();
}

TEST(Api, ParseBind) {
  EXPECT_EQ(parse_bind("127.0.0.1:8080"), (std::pair<std::string, int>{"127.0.0.1", 8080}));
  EXPECT_THROW(parse_bind("localhost"), Error);
  EXPECT_THROW(parse_bind("h:0x"), Error);
  EXPECT_THROW(parse_bind("h:70000"), Error);
}
