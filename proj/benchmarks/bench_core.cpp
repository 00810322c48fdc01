#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include <unistd.h>

#include "audit/config.hpp"
#include "audit/event_log.hpp"
#include "audit/grpo.hpp"
#include "audit/pipeline.hpp"
#include "audit/pool.hpp"
#include "audit/store.hpp"
#include "audit/util.hpp"

using namespace audit;
namespace fs = std::filesystem;

static void BM_Advantages(benchmark::State& state) {
  std::mt19937_64 gen(1);
  std::vector<double> s(static_cast<std::size_t>(state.range(0)));
  for (auto& v : s) v = static_cast<double>(gen() & 1);
  s[0] = 0.0;
  s[1] = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(compute_advantages(s, 1e-4));
}
BENCHMARK(BM_Advantages)->Arg(8)->Arg(32);

static void BM_Surrogate(benchmark::State& state) {
  const StrategySpace space(kProbeTemplateCount);
  const std::size_t n = space.size();
  std::mt19937_64 gen(2);
  std::normal_distribution<double> normal(0.0, 0.5);
  std::vector<double> z(n), z_old(n);
  for (std::size_t i = 0; i < n; ++i) {
    z_old[i] = normal(gen);
    z[i] = z_old[i] + 0.1 * normal(gen);
  }
  std::vector<GroupBatch> groups(static_cast<std::size_t>(state.range(0)));
  std::vector<std::vector<double>> adv;
  for (auto& g : groups) {
    const auto lp = masked_log_softmax(z_old, g.mask);
    for (std::size_t j = 0; j < 8; ++j) {
      const std::size_t a = gen() % n;
      g.samples.push_back({a, "", static_cast<double>(j % 2), lp[a]});
    }
    adv.push_back(compute_advantages(g.rewards(), 1e-4).advantages);
  }
  for (auto _ : state) benchmark::DoNotOptimize(grpo_surrogate(z, z_old, groups, adv, 0.2, 0.01));
}
BENCHMARK(BM_Surrogate)->Arg(4)->Arg(256);

static void BM_MockAttempt(benchmark::State& state) {
  Runtime rt(mock_config(3));
  const auto pool = make_mock_pool(64, 3, true);
  register_pool(rt, pool);
  const auto policy = AuditorPolicy::uniform(rt.space().size());
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng(derive_seed(9, i));
    benchmark::DoNotOptimize(
        run_attempt(rt, policy, pool[rng.below(pool.size())], rng.unit(), derive_seed(9, i, 1), "b" + std::to_string(i)));
    ++i;
  }
}
BENCHMARK(BM_MockAttempt);

static void BM_Replay(benchmark::State& state) {
  const fs::path root = fs::temp_directory_path() / ("audit-bench-" + std::to_string(::getpid()));
  {
    Store store(root);
    Runtime rt(mock_config(4));
    RunWriter run(store, "bench", true);
    AuditOptions opt;
    opt.n = static_cast<std::size_t>(state.range(0));
    run_audit(rt, AuditorPolicy::uniform(rt.space().size()), make_mock_pool(64, 4, true), opt, run);
  }
  const fs::path log = root / "runs" / "bench" / "events.jsonl";
  for (auto _ : state) benchmark::DoNotOptimize(replay_log(log));
  state.counters["bytes"] = static_cast<double>(fs::file_size(log));
  fs::remove_all(root);
}
BENCHMARK(BM_Replay)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
