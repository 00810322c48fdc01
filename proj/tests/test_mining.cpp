#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "audit/error.hpp"
#include "audit/mining.hpp"
#include "audit/mock_models.hpp"

using namespace audit;

namespace {

BackendHandle handle(const std::string& id, Role role) {
  BackendHandle h;
  h.id = id;
  h.role = role;
  h.retry = {1, 0};
  return h;
}

class Down : public Backend {
 public:
  std::string chat(const ChatRequest&) override { throw Error(ErrorCode::BackendUnavailable, "down"); }
};

class Fixed : public Backend {
 public:
  explicit Fixed(std::string reply) : reply_(std::move(reply)) {}
  std::string chat(const ChatRequest&) override { return reply_; }

 private:
  std::string reply_;
};

FailureCase make_case(int i, const std::string& q, const std::string& root, const std::string& category = "counting") {
  FailureCase c;
  c.id = "c" + std::to_string(i);
  c.exemplar_id = "e" + std::to_string(i);
  c.record_id = "r" + std::to_string(i);
  c.question = q;
  c.image_root = root;
  c.category = category;
  c.dedup_key = dedup_key(q, root);
  return c;
}

Verdict verdict(const std::string& id, VerdictLabel l) { return {id, l, "ann", 1}; }

// Plain dynamic-programming edit distance over the raw strings.
std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
  return d[a.size()][b.size()];
}

}  // namespace

TEST(Categorize, MockSummarizerMapsCountingWeakness) {
  Gateway gw;
  gw.add(handle("sum", Role::Summarizer), std::make_shared<MockSummarizer>());
  const auto c = categorize(gw, "sum", "How many apples are in the image?", "3", "5");
  EXPECT_EQ(c.category, "counting");
  EXPECT_EQ(c.root_cause, "reports capped count above threshold");
  const auto d = categorize(gw, "sum", "How many cars are in the image?", "2", "4");
  EXPECT_EQ(d.category, c.category);
}

TEST(Categorize, OutageAndGarbageAreUncategorized) {
  Gateway gw;
  gw.add(handle("down", Role::Summarizer), std::make_shared<Down>());
  gw.add(handle("junk", Role::Summarizer), std::make_shared<Fixed>("no idea"));
  gw.add(handle("odd", Role::Summarizer), std::make_shared<Fixed>("CATEGORY: Object Countings!\nROOT_CAUSE: x"));
  const auto a = categorize(gw, "down", "q", "a", "b");
  EXPECT_EQ(a.category, "uncategorized");
  EXPECT_EQ(a.root_cause, "");
  EXPECT_EQ(categorize(gw, "junk", "q", "a", "b").category, "uncategorized");
  EXPECT_EQ(categorize(gw, "odd", "q", "a", "b").category, "object counting");
}

TEST(Categorize, Canonicalization) {
  EXPECT_EQ(canonical_category("Counting"), "counting");
  EXPECT_EQ(canonical_category("  COUNTING. "), "counting");
  EXPECT_EQ(canonical_category("Colors"), "color");
  EXPECT_EQ(canonical_category("spatial   relations"), canonical_category("Spatial relation"));
}

TEST(Dedup, Examples) {
  {
    auto kept = dedup({make_case(1, "How many apples?", "img1"), make_case(2, "How many apples?", "img1")});
    EXPECT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].id, "c1");
  }
  {
    auto kept = dedup({make_case(1, "How many apples?", "img1"), make_case(2, "How many apples?", "img2")});
    EXPECT_EQ(kept.size(), 2u);
  }
  {
    const std::string a = "How many apples are there?";
    const std::string b = "How many apples are there ?";
    EXPECT_GE(1.0 - static_cast<double>(edit_distance(a, b)) / std::max(a.size(), b.size()), 0.9);
    auto kept = dedup({make_case(1, a, "img1"), make_case(2, b, "img1")});
    EXPECT_EQ(kept.size(), 1u);
  }
  {
    auto kept = dedup({make_case(1, "How many apples?", "img1"), make_case(2, "What color is the car?", "img1")});
    EXPECT_EQ(kept.size(), 2u);
  }
}

TEST(Dedup, SimilarityMatchesEditDistanceOnFingerprints) {
  std::mt19937_64 rng(1);
  const std::string alphabet = "abc de";
  for (int t = 0; t < 300; ++t) {
    std::string a, b;
    for (int i = 0; i < static_cast<int>(rng() % 12); ++i) a += alphabet[rng() % alphabet.size()];
    for (int i = 0; i < static_cast<int>(rng() % 12); ++i) b += alphabet[rng() % alphabet.size()];
    const std::string fa = question_fingerprint(a), fb = question_fingerprint(b);
    const double want = fa.empty() && fb.empty()
                            ? 1.0
                            : 1.0 - static_cast<double>(edit_distance(fa, fb)) / std::max(fa.size(), fb.size());
    EXPECT_NEAR(normalized_similarity(a, b), want, 1e-12) << a << "|" << b;
  }
}

TEST(Dedup, IdempotentStableAndMarksInPlace) {
  std::mt19937_64 rng(9);
  const std::vector<std::string> qs = {"How many apples?", "How many apples ?", "How many apple?",
                                       "What color is the car?", "Is there a dog in the image?"};
  std::vector<FailureCase> cases;
  for (int i = 0; i < 200; ++i) cases.push_back(make_case(i, qs[rng() % qs.size()], "img" + std::to_string(rng() % 5)));
  const auto once = dedup(cases);
  const auto twice = dedup(once);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once[i].id, twice[i].id);
  for (std::size_t i = 1; i < once.size(); ++i)
    EXPECT_LT(std::stoi(once[i - 1].id.substr(1)), std::stoi(once[i].id.substr(1)));
  for (std::size_t i = 0; i < once.size(); ++i)
    for (std::size_t j = i + 1; j < once.size(); ++j)
      EXPECT_FALSE(is_duplicate({once[i].question, once[i].image_root}, {once[j].question, once[j].image_root}));

  auto marked = cases;
  mark_duplicates(marked);
  std::size_t active = 0;
  for (const auto& c : marked) active += c.active();
  EXPECT_EQ(active, once.size());
  EXPECT_EQ(marked.size(), cases.size());
}

TEST(SuccessRate, ArithmeticAndEmpty) {
  std::vector<FailureCase> cases(18220);
  EXPECT_NEAR(search_success_rate(20000, cases, false), 0.911, 1e-12);
  EXPECT_EQ(search_success_rate(20000, {}, false), 0.0);
  EXPECT_EQ(search_success_rate(20000, {}, true), 0.0);
  try {
    search_success_rate(0, {}, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyRun);
  }
}

TEST(SuccessRate, VerdictFixtureRecount) {
  std::vector<FailureCase> cases;
  for (int i = 0; i < 6; ++i) cases.push_back(make_case(i, "q" + std::to_string(i), "img"));
  const std::vector<std::optional<VerdictLabel>> labels = {VerdictLabel::TargetFailure, VerdictLabel::TargetFailure,
                                                           VerdictLabel::Ambiguous,     VerdictLabel::TargetFailure,
                                                           VerdictLabel::Unanswerable,  std::nullopt};
  for (std::size_t i = 0; i < cases.size(); ++i)
    if (labels[i]) cases[i].verdict = verdict(cases[i].id, *labels[i]);
  EXPECT_NEAR(search_success_rate(10, cases, false), 6.0 / 10.0, 1e-15);
  EXPECT_NEAR(search_success_rate(10, cases, true), 3.0 / 9.0, 1e-15);
}

TEST(SuccessRate, VerdictOnlyMovesItsOwnCase) {
  std::mt19937_64 rng(4);
  std::vector<FailureCase> cases;
  for (int i = 0; i < 40; ++i) cases.push_back(make_case(i, "q" + std::to_string(i), "img"));
  const std::size_t attempts = 100;
  for (int step = 0; step < 40; ++step) {
    auto before = cases;
    const auto label = static_cast<VerdictLabel>(rng() % 3);
    cases[step].verdict = verdict(cases[step].id, label);
    std::size_t tf = 0, un = 0;
    for (const auto& c : cases)
      if (c.verdict) {
        tf += c.verdict->label == VerdictLabel::TargetFailure;
        un += c.verdict->label == VerdictLabel::Unanswerable;
      }
    EXPECT_NEAR(search_success_rate(attempts, cases, true), static_cast<double>(tf) / (attempts - un), 1e-15);
    for (int i = 0; i < 40; ++i)
      if (i != step) {
        EXPECT_EQ(before[i].verdict.has_value(), cases[i].verdict.has_value());
      }
  }
}

TEST(CategoryRates, Examples) {
  std::vector<FailureCase> cases = {make_case(1, "a", "i", "counting"), make_case(2, "b", "i", "counting"),
                                    make_case(3, "c", "i", "counting"), make_case(4, "d", "i", "color")};
  auto r = category_rates(cases);
  ASSERT_EQ(r.categories.size(), 2u);
  EXPECT_EQ(r.categories[0].name, "counting");
  EXPECT_DOUBLE_EQ(r.categories[0].rate, 0.75);
  EXPECT_DOUBLE_EQ(r.categories[1].rate, 0.25);
  EXPECT_EQ(r.total_cases, 4u);
  EXPECT_EQ(r.top(1).size(), 1u);

  auto single = category_rates({make_case(1, "a", "i", "color")});
  EXPECT_DOUBLE_EQ(single.categories.at(0).rate, 1.0);

  auto dup = cases;
  dup[3].duplicate = true;
  EXPECT_DOUBLE_EQ(category_rates(dup).categories.at(0).rate, 1.0);
  dup[0].duplicate = dup[1].duplicate = dup[2].duplicate = true;
  EXPECT_THROW(category_rates(dup), Error);
  EXPECT_THROW(category_rates({}), Error);
}

TEST(CategoryRates, SumToOneOverRandomRun) {
  std::mt19937_64 rng(8);
  const std::vector<std::string> cats = {"counting", "color", "spatial", "presence", "size", "knowledge"};
  std::vector<FailureCase> cases;
  std::map<std::string, int> want;
  for (int i = 0; i < 100; ++i) {
    const auto& c = cats[rng() % cats.size()];
    cases.push_back(make_case(i, "q" + std::to_string(i), "img", c));
    ++want[c];
  }
  auto r = category_rates(cases);
  double sum = 0;
  for (const auto& c : r.categories) {
    sum += c.rate;
    EXPECT_EQ(static_cast<int>(c.count), want[c.name]);
    EXPECT_DOUBLE_EQ(c.rate, want[c.name] / 100.0);
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  for (std::size_t i = 1; i < r.categories.size(); ++i) EXPECT_GE(r.categories[i - 1].count, r.categories[i].count);
}

TEST(Report, JsonShape) {
  std::vector<FailureCase> cases = {make_case(1, "a", "i", "counting"), make_case(2, "b", "i", "color")};
  cases[0].verdict = verdict("c1", VerdictLabel::TargetFailure);
  const auto r = build_report("run-x", 8, cases, 1);
  const auto j = report_json(r);
  EXPECT_EQ(j["run_id"], "run-x");
  EXPECT_EQ(j["attempts"], 8);
  EXPECT_DOUBLE_EQ(j["success_rate"].get<double>(), 0.25);
  EXPECT_DOUBLE_EQ(j["success_rate_adjudicated"].get<double>(), 0.125);
  EXPECT_EQ(j["categories"].size(), 2u);
  EXPECT_EQ(j["top_cases"].size(), 1u);
  EXPECT_EQ(j["verdicts"]["target_failure"], 1);
  EXPECT_NE(report_table(r).find("counting"), std::string::npos);

  const auto empty = build_report("run-y", 0, {});
  EXPECT_EQ(report_json(empty)["success_rate"], 0.0);
}

TEST(Verdicts, EnumAndJson) {
  EXPECT_EQ(verdict_label_from_string("target_failure"), VerdictLabel::TargetFailure);
  EXPECT_EQ(verdict_label_from_string("ambiguous"), VerdictLabel::Ambiguous);
  EXPECT_EQ(verdict_label_from_string("unanswerable"), VerdictLabel::Unanswerable);
  EXPECT_EQ(verdict_label_from_string("wrong"), std::nullopt);
  auto c = make_case(1, "q", "i");
  c.verdict = verdict("c1", VerdictLabel::Ambiguous);
  c.status = CaseStatus::Adjudicated;
  const FailureCase round = nlohmann::json(c).get<FailureCase>();
  EXPECT_EQ(nlohmann::json(round).dump(), nlohmann::json(c).dump());
}
