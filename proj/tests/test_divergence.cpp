#include <gtest/gtest.h>

#include <cctype>
#include <map>
#include <random>

#include "audit/divergence.hpp"
#include "audit/error.hpp"
#include "audit/mock_models.hpp"
#include "support.hpp"

using namespace audit;
using testing_support::canon;

namespace {

BackendHandle handle(const std::string& id, Role role) {
  BackendHandle h;
  h.id = id;
  h.role = role;
  h.retry = {1, 0};
  return h;
}

class Fixed : public Backend {
 public:
  explicit Fixed(std::string reply) : reply_(std::move(reply)) {}
  std::string chat(const ChatRequest&) override { return reply_; }

 private:
  std::string reply_;
};

class Down : public Backend {
 public:
  std::string chat(const ChatRequest&) override { throw Error(ErrorCode::BackendUnavailable, "down"); }
};

struct World {
  Gateway gw;
  World(Weaknesses target_weakness, std::vector<std::shared_ptr<Backend>> refs,
        std::shared_ptr<Backend> judge = std::make_shared<MockJudge>()) {
    gw.add(handle("target", Role::Target), std::make_shared<MockAnswerer>(std::move(target_weakness)));
    for (std::size_t i = 0; i < refs.size(); ++i)
      gw.add(handle("ref" + std::to_string(i), Role::Reference), refs[i]);
    gw.add(handle("judge", Role::Judge), std::move(judge));
    for (std::size_t i = 0; i < refs.size(); ++i) ref_ids.push_back("ref" + std::to_string(i));
  }
  Scorer scorer(ConsensusMode mode = ConsensusMode::Fraction) {
    ConsensusPolicy p;
    p.mode = mode;
    p.judge_handle = "judge";
    return Scorer(gw, "target", ref_ids, p);
  }
  std::vector<std::string> ref_ids;
};

std::vector<std::shared_ptr<Backend>> faithful(int n) {
  std::vector<std::shared_ptr<Backend>> out;
  for (int i = 0; i < n; ++i) out.push_back(std::make_shared<MockAnswerer>());
  return out;
}

Exemplar exemplar_on(SyntheticScene scene, const std::string& question) {
  Exemplar ex;
  ex.id = "ex1";
  ex.question = question;
  ex.image.uri = "src://x";
  ex.image.width = ex.image.height = 448;
  ex.image.scene = std::move(scene);
  return ex;
}

SyntheticScene apples(int n) {
  SyntheticScene s;
  for (int i = 0; i < n; ++i) s.objects.push_back({"apple", "red", 1, {i, 0}});
  s.normalize();
  return s;
}

// Brute-force consensus: equivalence under canon() is already transitive,
// so the largest class decides.
std::optional<std::string> oracle_consensus(const std::vector<std::string>& answers, double theta,
                                            bool unanimous) {
  std::map<std::string, int> sizes;
  for (const auto& a : answers) ++sizes[canon(a)];
  int best = 0;
  std::string key;
  for (const auto& [k, n] : sizes)
    if (n > best) best = n, key = k;
  const double frac = static_cast<double>(best) / answers.size();
  if (unanimous ? best != static_cast<int>(answers.size()) : frac < theta - 1e-12) return std::nullopt;
  // Largest classes can tie only below a strict majority, which theta excludes.
  return key;
}

}  // namespace

TEST(Judge, Examples) {
  World w({}, faithful(2));
  auto s = w.scorer();
  EXPECT_EQ(s.judge("5", "five"), 0);
  EXPECT_EQ(s.judge("3", "5"), 1);
  EXPECT_EQ(s.judge("The dog.", "dog"), 0);
  for (const std::string a : {"x", "red", "Two apples", "yes"}) EXPECT_EQ(s.judge(a, a), 0);
}

TEST(Judge, EmptyAnswerIsJudgeError) {
  World w({}, faithful(2));
  auto s = w.scorer();
  try {
    s.judge("", "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::JudgeError);
  }
}

TEST(Judge, SymmetricOverCorpus) {
  World w({}, faithful(2));
  auto s = w.scorer();
  std::vector<std::string> corpus = {"5", "five", "Five.", "the five", "3", "three", "red", "Red!",
                                     "a red", "blue", "yes", "Yes", "no", "none", "dog", "the dog",
                                     "Dogs", "I cannot tell", "transportation", "telling time"};
  std::mt19937_64 rng(11);
  for (int i = 0; i < 40; ++i) {
    std::string a;
    for (int k = 0; k < 1 + static_cast<int>(rng() % 3); ++k) a += corpus[rng() % corpus.size()] + " ";
    corpus.push_back(a);
  }
  for (const auto& a : corpus)
    for (const auto& b : corpus) {
      if (trim(a).empty() || trim(b).empty()) continue;
      const int ab = s.judge(a, b);
      EXPECT_EQ(ab, s.judge(b, a)) << a << " | " << b;
      EXPECT_EQ(ab, canon(a) == canon(b) ? 0 : 1) << a << " | " << b;
    }
}

TEST(Consensus, Examples) {
  World w({}, faithful(2));
  auto frac = w.scorer();
  EXPECT_EQ(frac.consensus({"5", "five", "5"}), "5");
  EXPECT_EQ(frac.consensus({"a", "b", "c"}), std::nullopt);
  auto unan = w.scorer(ConsensusMode::Unanimous);
  EXPECT_EQ(unan.consensus({"x", "x"}), "x");
  EXPECT_EQ(unan.consensus({"x", "x", "y"}), std::nullopt);
  EXPECT_EQ(frac.consensus({"x", "x", "y"}), "x");
  EXPECT_THROW(frac.consensus({"x"}), Error);
}

TEST(Consensus, PolicyValidation) {
  ConsensusPolicy p;
  p.judge_handle = "judge";
  for (double bad : {0.5, 0.3, 1.01}) {
    p.threshold = bad;
    EXPECT_THROW(p.validate(), Error) << bad;
  }
  p.threshold = 1.0;
  EXPECT_NO_THROW(p.validate());
  p.judge_handle.clear();
  EXPECT_THROW(p.validate(), Error);
}

TEST(Consensus, MatchesBruteForceAndIgnoresOrder) {
  World w({}, faithful(2));
  auto frac = w.scorer();
  auto unan = w.scorer(ConsensusMode::Unanimous);
  const std::vector<std::string> pool = {"5", "five", "Five.", "4", "four", "red", "the red"};
  std::mt19937_64 rng(3);
  for (int t = 0; t < 500; ++t) {
    std::vector<std::string> answers(2 + rng() % 6);
    for (auto& a : answers) a = pool[rng() % pool.size()];
    const auto want = oracle_consensus(answers, 2.0 / 3.0, false);
    auto got = frac.consensus(answers);
    EXPECT_EQ(got.has_value(), want.has_value());
    if (got && want) EXPECT_EQ(canon(*got), *want);
    std::shuffle(answers.begin(), answers.end(), rng);
    auto again = frac.consensus(answers);
    EXPECT_EQ(again.has_value(), got.has_value());
    if (again && got) EXPECT_EQ(canon(*again), canon(*got));
    const auto want_u = oracle_consensus(answers, 1.0, true);
    auto got_u = unan.consensus(answers);
    EXPECT_EQ(got_u.has_value(), want_u.has_value());
    if (got_u && want_u) EXPECT_EQ(canon(*got_u), *want_u);
  }
}

TEST(Score, CountingCapYieldsAcceptedSignal) {
  Weaknesses cap;
  cap.count_cap = 3;
  World w(cap, faithful(3));
  auto s = w.scorer();
  const auto scene = apples(5);
  const auto rec = s.score(exemplar_on(scene, "How many apples?"), "r1");
  EXPECT_EQ(rec.id, "r1");
  EXPECT_EQ(rec.target_answer, "3");
  ASSERT_TRUE(rec.consensus.has_value());
  EXPECT_EQ(*rec.consensus, std::to_string(scene.count("apple")));
  EXPECT_EQ(*rec.consensus, "5");
  EXPECT_EQ(rec.signal, 1);
  EXPECT_EQ(rec.filter_outcome, FilterOutcome::Accepted);
  EXPECT_TRUE(rec.rewardable());
  EXPECT_EQ(rec.reference_answers.size(), 3u);
  EXPECT_FALSE(rec.judge_transcript.empty());

  DisagreementRecord round = nlohmann::json(rec).get<DisagreementRecord>();
  EXPECT_EQ(nlohmann::json(round).dump(), nlohmann::json(rec).dump());
}

TEST(Score, AbsentObjectAgreesOnNone) {
  Weaknesses cap;
  cap.count_cap = 3;
  World w(cap, faithful(3));
  auto s = w.scorer();
  const auto rec = s.score(exemplar_on(apples(5), "What color is the dog?"));
  EXPECT_EQ(rec.target_answer, "none");
  EXPECT_EQ(rec.consensus, "none");
  EXPECT_EQ(rec.signal, 0);
  EXPECT_EQ(rec.filter_outcome, FilterOutcome::Accepted);
}

TEST(Score, SplitEnsembleHasNoConsensus) {
  World w({}, {std::make_shared<Fixed>("red"), std::make_shared<Fixed>("blue"), std::make_shared<Fixed>("green")});
  auto s = w.scorer();
  const auto rec = s.score(exemplar_on(apples(2), "What color is the apple?"));
  EXPECT_EQ(rec.filter_outcome, FilterOutcome::NoConsensus);
  EXPECT_EQ(rec.signal, 0);
  EXPECT_FALSE(rec.consensus.has_value());
  EXPECT_FALSE(rec.rewardable());
}

TEST(Score, JudgeFailureIsRecorded) {
  {
    World w({}, {std::make_shared<Fixed>("red"), std::make_shared<Fixed>("blue")}, std::make_shared<Fixed>("MAYBE"));
    auto s = w.scorer();
    const auto rec = s.score(exemplar_on(apples(2), "What color is the apple?"));
    EXPECT_EQ(rec.filter_outcome, FilterOutcome::JudgeError);
    EXPECT_EQ(rec.signal, 0);
    EXPECT_FALSE(rec.error.empty());
  }
  {
    World w({}, {std::make_shared<Fixed>("red"), std::make_shared<Fixed>("blue")}, std::make_shared<Down>());
    auto s = w.scorer();
    const auto rec = s.score(exemplar_on(apples(2), "What color is the apple?"));
    EXPECT_EQ(rec.filter_outcome, FilterOutcome::JudgeError);
    EXPECT_FALSE(rec.rewardable());
  }
}

TEST(Score, TargetNeverInEnsemble) {
  World w({}, faithful(2));
  ConsensusPolicy p;
  p.judge_handle = "judge";
  EXPECT_THROW(Scorer(w.gw, "target", {"ref0", "target"}, p), Error);
  EXPECT_THROW(Scorer(w.gw, "target", {}, p), Error);
  EXPECT_THROW(Scorer(w.gw, "ref0", {"ref1"}, p), Error);
}

TEST(Score, SoundOnRandomScenes) {
  Weaknesses wk;
  wk.count_cap = 2;
  wk.spatial_flip = true;
  World w(wk, faithful(3));
  auto s = w.scorer();
  std::mt19937_64 rng(5);
  int accepted_hits = 0;
  for (std::uint64_t k = 0; k < 300; ++k) {
    const auto scene = random_scene(k);
    const auto cats = scene.categories();
    ProbeQuestion q{probe_kind(static_cast<int>(rng() % kProbeTemplateCount)), cats[rng() % cats.size()],
                    cats[rng() % cats.size()]};
    const std::string question = format_probe(q);
    const auto rec = s.score(exemplar_on(scene, question));
    const auto truth = testing_support::oracle_answer(question, scene);
    ASSERT_TRUE(truth.has_value()) << question;
    if (rec.signal == 1 && rec.filter_outcome == FilterOutcome::Accepted) {
      ++accepted_hits;
      EXPECT_EQ(canon(*rec.consensus), canon(*truth)) << question;
    }
  }
  EXPECT_GT(accepted_hits, 0);
}
