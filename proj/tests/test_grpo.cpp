#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "audit/error.hpp"
#include "audit/grpo.hpp"

using namespace audit;

namespace {

// Straight evaluation of the group-relative advantage in long double.
std::vector<double> direct_advantages(const std::vector<double>& s, double eps) {
  std::vector<double> out(s.size(), 0.0);
  if (std::set<double>(s.begin(), s.end()).size() == 1) return out;
  long double mean = 0;
  for (double v : s) mean += v;
  mean /= s.size();
  long double var = 0;
  for (double v : s) var += (v - mean) * (v - mean);
  var /= s.size();
  const long double sd = std::sqrt(var);
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = static_cast<double>((s[i] - mean) / (sd + eps));
  return out;
}

TrainSchedule production_schedule() {
  TrainSchedule s;
  s.total_steps = 1000;
  s.warmup_fraction = 0.1;
  s.lr_init = 3e-6;
  s.lr_final = 1e-6;
  s.checkpoint_every = 250;
  return s;
}

GroupBatch group_of(const std::vector<std::size_t>& strategies, const std::vector<double>& rewards,
                    const AuditorPolicy& policy) {
  GroupBatch g;
  g.context_id = "ctx";
  const auto lp = policy.log_probabilities();
  for (std::size_t i = 0; i < strategies.size(); ++i)
    g.samples.push_back({strategies[i], "e" + std::to_string(i), rewards[i], lp[strategies[i]]});
  return g;
}

}  // namespace

TEST(Advantages, HandExample) {
  const auto a = compute_advantages(std::vector<double>{1, 0, 0, 1}, 1e-4).advantages;
  ASSERT_EQ(a.size(), 4u);
  const double expect = 0.5 / (0.5 + 1e-4);
  EXPECT_NEAR(a[0], expect, 1e-15);
  EXPECT_NEAR(a[1], -expect, 1e-15);
  EXPECT_NEAR(a[2], -expect, 1e-15);
  EXPECT_NEAR(a[3], expect, 1e-15);
  EXPECT_NEAR(a[0], 0.99980, 5e-6);
}

TEST(Advantages, ZeroVarianceIsZero) {
  for (double eps : {1e-4, 1e-8, 1.0})
    for (double v : compute_advantages(std::vector<double>{1, 1, 1, 1}, eps).advantages) EXPECT_EQ(v, 0.0);
  // constant values whose floating-point mean is inexact
  for (double c : {0.1, -2.7, 1.0 / 3.0, 4.123456789})
    for (std::size_t k : {3u, 7u, 29u})
      for (double v : compute_advantages(std::vector<double>(k, c), 1e-4).advantages) EXPECT_EQ(v, 0.0) << c;
}

TEST(Advantages, PairClosedForm) {
  const auto a = compute_advantages(std::vector<double>{1, 0}, 1e-4).advantages;
  EXPECT_NEAR(a[0], 0.5 / 0.5001, 1e-15);
  EXPECT_NEAR(a[1], -0.5 / 0.5001, 1e-15);
  const auto tiny = compute_advantages(std::vector<double>{1, 0}, 1e-12).advantages;
  EXPECT_NEAR(tiny[0], 1.0, 1e-11);
  EXPECT_NEAR(tiny[1], -1.0, 1e-11);
}

TEST(Advantages, GroupTooSmall) {
  try {
    compute_advantages(std::vector<double>{1}, 1e-4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GroupTooSmall);
  }
  EXPECT_THROW(compute_advantages(std::vector<double>{}, 1e-4), Error);
}

TEST(Advantages, RandomGroupsMatchDirectFormula) {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> k_dist(2, 32);
  std::uniform_real_distribution<double> real(-3.0, 3.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const int k = k_dist(gen);
    std::vector<double> s(k);
    for (auto& v : s) v = trial % 2 ? static_cast<double>(gen() & 1) : real(gen);
    const auto got = compute_advantages(s, 1e-4).advantages;
    const auto want = direct_advantages(s, 1e-4);
    for (int i = 0; i < k; ++i) ASSERT_NEAR(got[i], want[i], 1e-12);

    double mean = 0, sig = 0, m2 = 0, sig_a = 0;
    for (double v : s) mean += v;
    mean /= k;
    for (double v : s) sig += (v - mean) * (v - mean);
    sig = std::sqrt(sig / k);
    if (sig == 0) continue;
    for (double v : got) m2 += v;
    m2 /= k;
    for (double v : got) sig_a += (v - m2) * (v - m2);
    sig_a = std::sqrt(sig_a / k);
    EXPECT_NEAR(m2, 0.0, 1e-9);
    EXPECT_NEAR(sig_a, sig / (sig + 1e-4), 1e-9);
  }
}

TEST(Schedule, LearningRateExamples) {
  const auto s = production_schedule();
  EXPECT_EQ(lr_at(0, s), 0.0);
  EXPECT_NEAR(lr_at(100, s), 3e-6, 1e-18);
  EXPECT_NEAR(lr_at(1000, s), 1e-6, 1e-18);
  EXPECT_NEAR(lr_at(50, s), 1.5e-6, 1e-18);
  const double c = std::cos(std::numbers::pi / 2);
  EXPECT_NEAR(lr_at(550, s), 3e-6 * (1 + c) / 2 + 1e-6 * (1 - c) / 2, 1e-18);
  for (int step = 101; step <= 1000; ++step) EXPECT_LE(lr_at(step, s), lr_at(step - 1, s));
}

TEST(Schedule, OutOfRange) {
  const auto s = production_schedule();
  for (int bad : {-1, 1001}) {
    try {
      lr_at(bad, s);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::StepOutOfRange);
    }
  }
}

TEST(Schedule, CheckpointSteps) {
  auto s = production_schedule();
  EXPECT_EQ(checkpoint_steps(s), (std::vector<int>{250, 500, 750, 1000}));
  s.checkpoint_every = 300;
  EXPECT_EQ(checkpoint_steps(s), (std::vector<int>{300, 600, 900, 1000}));
  EXPECT_TRUE(is_checkpoint_step(1000, s));
  EXPECT_FALSE(is_checkpoint_step(0, s));
  EXPECT_FALSE(is_checkpoint_step(301, s));
}

TEST(Schedule, Validation) {
  auto bad = production_schedule();
  bad.warmup_fraction = 0.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = production_schedule();
  bad.lr_final = 4e-6;
  EXPECT_THROW(bad.validate(), Error);
  bad = production_schedule();
  bad.checkpoint_every = 0;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_NO_THROW(production_schedule().validate());
}

TEST(Policy, MaskedProbabilities) {
  AuditorPolicy p{{0.3, -1.0, 2.0, 0.0}, 0, std::nullopt};
  const auto all = p.probabilities();
  double sum = 0;
  for (double v : all) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-9);
  const auto masked = p.probabilities({true, false, true, false});
  EXPECT_EQ(masked[1], 0.0);
  EXPECT_EQ(masked[3], 0.0);
  EXPECT_NEAR(masked[0] + masked[2], 1.0, 1e-12);
  EXPECT_NEAR(masked[2] / masked[0], std::exp(1.7), 1e-9);
  EXPECT_THROW(p.probabilities({false, false, false, false}), Error);
}

TEST(Step, RewardedStrategyGainsMass) {
  auto policy = AuditorPolicy::uniform(4);
  auto g = group_of({0, 0, 0, 0, 1, 1, 1, 1}, {1, 1, 1, 1, 0, 0, 0, 0}, policy);
  auto s = production_schedule();
  s.lr_init = 0.5;
  s.lr_final = 0.05;
  const auto out = grpo_step(policy, {g}, s, 100);
  EXPECT_GT(out.policy.probabilities()[0], policy.probabilities()[0]);
  EXPECT_LT(out.policy.probabilities()[1], policy.probabilities()[1]);
  EXPECT_EQ(out.policy.version, policy.version + 1);
  EXPECT_NEAR(out.stats.mean_reward, 0.5, 1e-12);
  EXPECT_NEAR(out.stats.lr, 0.5, 1e-12);
  EXPECT_EQ(out.stats.kl, 0.0);
}

TEST(Step, ZeroVarianceGroupsLeavePolicyUnchanged) {
  AuditorPolicy policy{{0.2, -0.4, 1.1}, 3, std::nullopt};
  auto a = group_of({0, 1, 2, 0}, {1, 1, 1, 1}, policy);
  auto b = group_of({2, 2, 1, 0}, {0, 0, 0, 0}, policy);
  const auto out = grpo_step(policy, {a, b}, production_schedule(), 500);
  EXPECT_EQ(out.policy.logits, policy.logits);
  EXPECT_EQ(out.stats.grad_norm, 0.0);
}

TEST(Step, NonFiniteGradientAborts) {
  const auto policy = AuditorPolicy::uniform(3);
  auto g = group_of({0, 1}, {0, 1}, policy);
  g.samples[0].logprob_old = -std::numeric_limits<double>::infinity();
  try {
    grpo_step(policy, {g}, production_schedule(), 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteGradient);
  }
  EXPECT_EQ(policy.logits, std::vector<double>(3, 0.0));
}

TEST(Surrogate, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> normal(0.0, 0.7);
  const double clip = 0.2;
  const double beta = 0.01;
  int checked = 0;
  while (checked < 100) {
    const std::size_t n = 3 + gen() % 10;
    std::vector<double> z(n), z_old(n);
    for (std::size_t i = 0; i < n; ++i) {
      z_old[i] = normal(gen);
      z[i] = z_old[i] + 0.3 * normal(gen);
    }
    std::vector<GroupBatch> groups(1 + gen() % 3);
    std::vector<std::vector<double>> adv;
    for (auto& g : groups) {
      g.mask.assign(n, true);
      if (gen() % 2) g.mask[gen() % n] = false;
      const auto lp_old = masked_log_softmax(z_old, g.mask);
      const std::size_t k = 2 + gen() % 7;
      while (g.samples.size() < k) {
        const std::size_t a = gen() % n;
        if (!g.mask[a]) continue;
        g.samples.push_back({a, "", static_cast<double>(gen() & 1), lp_old[a]});
      }
      adv.push_back(compute_advantages(g.rewards(), 1e-4).advantages);
    }
    auto objective = [&](const std::vector<double>& x) {
      return grpo_surrogate(x, z_old, groups, adv, clip, beta).objective;
    };
    // stay away from the clip kinks
    bool near_kink = false;
    for (const auto& g : groups) {
      const auto lp = masked_log_softmax(z, g.mask);
      for (const auto& s : g.samples) {
        const double rho = std::exp(lp[s.strategy] - s.logprob_old);
        if (std::abs(rho - (1 - clip)) < 1e-3 || std::abs(rho - (1 + clip)) < 1e-3) near_kink = true;
      }
    }
    if (near_kink) continue;

    const auto analytic = grpo_surrogate(z, z_old, groups, adv, clip, beta).gradient;
    const double h = 1e-6;
    double diff2 = 0, norm2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto up = z, down = z;
      up[i] += h;
      down[i] -= h;
      const double fd = (objective(up) - objective(down)) / (2 * h);
      diff2 += (analytic[i] - fd) * (analytic[i] - fd);
      norm2 += fd * fd;
    }
    const double rel = std::sqrt(diff2) / std::max(std::sqrt(norm2), 1e-12);
    if (norm2 > 0) EXPECT_LT(rel, 1e-5) << "instance " << checked;
    ++checked;
  }
}

TEST(Surrogate, KlIsZeroAtAnchor) {
  std::vector<double> z{0.1, 0.7, -0.2};
  GroupBatch g;
  g.samples = {{0, "", 1, 0}, {1, "", 0, 0}};
  const auto v = grpo_surrogate(z, z, {g}, {{0.0, 0.0}}, 0.2, 0.5);
  EXPECT_EQ(v.kl, 0.0);
  for (double d : v.gradient) EXPECT_NEAR(d, 0.0, 1e-15);
}
