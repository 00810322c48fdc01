#include "audit/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "audit/error.hpp"
#include "audit/parallel.hpp"
#include "audit/util.hpp"

namespace audit {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kContextDomain = 0x7C;
constexpr std::uint64_t kStrategyDomain = 0x75;

void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorCode::FormatError, "cannot write '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void append_line(const fs::path& path, const nlohmann::json& j) {
  if (path.empty()) return;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  out << j.dump() << "\n";
}

std::string attempt_id(int step, std::size_t group, std::size_t sample) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "t%06d-g%03zu-s%02zu", step, group, sample);
  return buf;
}

}  // namespace

void to_json(nlohmann::json& j, const Checkpoint& c) {
  j = {{"id", c.id},
       {"version", c.policy.version},
       {"step", c.step},
       {"logits", c.policy.logits},
       {"strategies", c.strategies},
       {"schedule", c.schedule},
       {"config_hash", c.config_hash},
       {"parent_checkpoint", c.policy.parent_checkpoint ? nlohmann::json(*c.policy.parent_checkpoint)
                                                        : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, Checkpoint& c) {
  c = {};
  c.id = j.at("id").get<std::string>();
  c.step = j.at("step").get<int>();
  c.policy.version = j.at("version").get<int>();
  c.policy.logits = j.at("logits").get<std::vector<double>>();
  c.strategies = j.value("strategies", std::vector<std::string>{});
  if (j.contains("schedule")) c.schedule = j["schedule"].get<TrainSchedule>();
  c.config_hash = j.value("config_hash", "");
  if (j.contains("parent_checkpoint") && j["parent_checkpoint"].is_string())
    c.policy.parent_checkpoint = j["parent_checkpoint"].get<std::string>();
}

std::string checkpoint_id(int step) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "ckpt-%06d", step);
  return buf;
}

void save_checkpoint(const fs::path& path, const Checkpoint& c) {
  write_atomic(path, nlohmann::json(c).dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "no checkpoint at '" + path.string() + "'");
  try {
    nlohmann::json j;
    in >> j;
    auto c = j.get<Checkpoint>();
    if (!c.policy.finite()) throw Error(ErrorCode::FormatError, "checkpoint has non-finite logits");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return hex64(fnv1a64(bytes));
}

TrainResult train(Runtime& rt, const std::vector<PoolItem>& pool, const TrainOptions& options) {
  if (pool.empty()) throw Error(ErrorCode::EmptyPool, "image pool is empty");
  if (options.checkpoint_dir.empty()) throw Error(ErrorCode::ConfigError, "checkpoint_dir is required");
  const PipelineConfig& cfg = rt.config();
  const TrainSchedule& schedule = cfg.schedule;
  schedule.validate();
  register_pool(rt, pool);

  std::vector<std::string> strategy_names;
  for (const auto& s : rt.space().all()) strategy_names.push_back(s.str());
  const std::string config_hash = cfg.hash();
  const fs::path feed = options.feed.empty() ? options.checkpoint_dir / "feed.jsonl" : options.feed;

  TrainResult result;
  result.policy = AuditorPolicy::uniform(rt.space().size());
  int first_step = 1;
  std::optional<std::string> last_ckpt;

  auto save = [&](int step) {
    Checkpoint c{checkpoint_id(step), step, result.policy, strategy_names, schedule, config_hash};
    c.policy.parent_checkpoint = last_ckpt;
    const fs::path path = options.checkpoint_dir / (c.id + ".json");
    save_checkpoint(path, c);
    last_ckpt = c.id;
    if (options.run)
      options.run->emit(EventType::CheckpointWritten,
                        {{"id", c.id}, {"path", path.string()}, {"step", step}, {"hash", file_hash(path)}});
    return path;
  };

  if (options.resume) {
    std::ifstream in(*options.resume);
    if (!in) throw Error(ErrorCode::NotFound, "no resume state at '" + options.resume->string() + "'");
    nlohmann::json j;
    in >> j;
    first_step = j.at("step").get<int>() + 1;
    result.policy.logits = j.at("logits").get<std::vector<double>>();
    result.policy.version = j.at("version").get<int>();
    if (j.contains("last_checkpoint") && j["last_checkpoint"].is_string())
      last_ckpt = j["last_checkpoint"].get<std::string>();
    result.initial_checkpoint = checkpoint_id(0);
    if (result.policy.logits.size() != rt.space().size())
      throw Error(ErrorCode::ConfigError, "resume state does not match the strategy space");
  } else {
    if (options.run) options.run->start("train", config_hash, {{"seed", cfg.seed}, {"steps", schedule.total_steps}});
    save(0);
    result.initial_checkpoint = checkpoint_id(0);
  }

  const std::size_t groups_per_step = static_cast<std::size_t>(schedule.batch_size_groups);
  const std::size_t k = static_cast<std::size_t>(cfg.group_size);
  for (int step = first_step; step <= schedule.total_steps; ++step) {
    std::vector<std::size_t> contexts(groups_per_step);
    for (std::size_t g = 0; g < groups_per_step; ++g)
      contexts[g] = Rng(derive_seed(cfg.seed, step, g, kContextDomain)).below(pool.size());

    std::vector<Attempt> attempts(groups_per_step * k);
    parallel_for(attempts.size(), cfg.workers, [&](std::size_t t) {
      const std::size_t g = t / k;
      const std::size_t j = t % k;
      const double u = Rng(derive_seed(cfg.seed, step, g, j, kStrategyDomain)).unit();
      attempts[t] = run_attempt(rt, result.policy, pool[contexts[g]], u, derive_seed(cfg.seed, step, g, j),
                                attempt_id(step, g, j));
    });

    if (std::all_of(attempts.begin(), attempts.end(), [](const Attempt& a) { return a.backend_down; })) {
      nlohmann::json resume = {{"step", step - 1},
                               {"logits", result.policy.logits},
                               {"version", result.policy.version},
                               {"last_checkpoint", last_ckpt ? nlohmann::json(*last_ckpt) : nlohmann::json(nullptr)}};
      write_atomic(options.checkpoint_dir / "resume.json", resume.dump(2) + "\n");
      if (options.run) options.run->finish(RunStatus::Failed);
      throw Error(ErrorCode::BackendUnavailable,
                  "every attempt of step " + std::to_string(step) + " failed; resume state written");
    }
    if (options.run)
      for (std::size_t t = 0; t < attempts.size(); ++t) log_attempt(*options.run, attempts[t], attempt_id(step, t / k, t % k));

    std::vector<GroupBatch> groups;
    std::size_t excluded = 0;
    for (std::size_t g = 0; g < groups_per_step; ++g) {
      const PoolItem& item = pool[contexts[g]];
      GroupBatch batch;
      batch.context_id = item.image.uri;
      batch.mask = rt.space().mask(cfg.enabled, item.question.has_value());
      batch.epsilon = cfg.epsilon;
      for (std::size_t j = 0; j < k; ++j) {
        const Attempt& a = attempts[g * k + j];
        if (!a.accepted()) {
          ++excluded;
          continue;
        }
        batch.samples.push_back({a.strategy, a.exemplar->id, a.reward(), a.logprob});
      }
      if (batch.samples.size() < 2) {
        excluded += batch.samples.size();
        continue;
      }
      groups.push_back(std::move(batch));
    }

    StepStats stats;
    stats.step = step;
    stats.lr = lr_at(step, schedule);
    if (cfg.remote_auditor) {
      double reward = 0.0;
      double abs_adv = 0.0;
      for (const auto& g : groups) {
        const auto adv = compute_advantages(g.rewards(), g.epsilon).advantages;
        for (std::size_t i = 0; i < g.samples.size(); ++i) {
          const auto& s = g.samples[i];
          append_line(feed, {{"step", step},
                             {"context_id", g.context_id},
                             {"strategy", strategy_names[s.strategy]},
                             {"exemplar_id", s.exemplar_id},
                             {"reward", s.reward},
                             {"advantage", adv[i]},
                             {"logprob_old", s.logprob_old}});
          reward += s.reward;
          abs_adv += std::abs(adv[i]);
          ++stats.samples;
        }
      }
      stats.groups = groups.size();
      if (stats.samples > 0) {
        stats.mean_reward = reward / static_cast<double>(stats.samples);
        stats.mean_abs_advantage = abs_adv / static_cast<double>(stats.samples);
      }
    } else if (!groups.empty()) {
      auto next = grpo_step(result.policy, groups, schedule, step);
      next.policy.parent_checkpoint = last_ckpt;
      result.policy = std::move(next.policy);
      stats = next.stats;
    }
    stats.excluded = excluded;
    append_line(options.step_log, stats);
    if (options.on_step) options.on_step(stats, result.policy);
    result.stats.push_back(stats);

    if (is_checkpoint_step(step, schedule)) {
      const auto path = save(step);
      result.checkpoint_ids.push_back(checkpoint_id(step));
      result.checkpoint_paths.push_back(path);
    }
  }
  if (options.run) options.run->finish(RunStatus::Completed);
  return result;
}

}  // namespace audit
