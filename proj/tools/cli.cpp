#include "cli.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "audit/config.hpp"
#include "audit/error.hpp"
#include "audit/http_api.hpp"
#include "audit/pipeline.hpp"
#include "audit/pool.hpp"
#include "audit/rectify.hpp"
#include "audit/store.hpp"
#include "audit/trainer.hpp"
#include "audit/util.hpp"

namespace audit::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

struct Common {
  std::optional<std::uint64_t> seed;
  std::string store = env_or("AUDITDM_STORE", "store");
  bool json = false;
  std::string config;
};

struct PoolArgs {
  std::string dir;
  std::size_t mock_n = 64;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Seed (overrides the config)");
  cmd->add_option("--store", c.store, "Storage root (default $AUDITDM_STORE or ./store)");
  cmd->add_flag("--json", c.json, "Machine-readable output");
}

void add_config(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Pipeline config (JSON); the mock world when omitted");
}

void add_pool(CLI::App* cmd, PoolArgs& p) {
  cmd->add_option("--pool", p.dir, "Image pool directory");
  cmd->add_option("--mock-pool", p.mock_n, "Size of the seeded mock pool used when --pool is omitted");
}

PipelineConfig load(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? mock_config(c.seed.value_or(0)) : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

std::vector<PoolItem> pool_of(const PoolArgs& p, const PipelineConfig& cfg) {
  if (!p.dir.empty()) return load_pool(p.dir);
  if (p.mock_n == 0) throw Error(ErrorCode::EmptyPool, "mock pool size is 0");
  return make_mock_pool(p.mock_n, cfg.seed, true, cfg.templates);
}

Checkpoint resolve_checkpoint(const Store& store, const std::string& ref) {
  if (fs::is_regular_file(ref)) return load_checkpoint(ref);
  const fs::path root = store.checkpoints_dir();
  if (fs::is_directory(root)) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs)
      if (fs::is_regular_file(d / (ref + ".json"))) return load_checkpoint(d / (ref + ".json"));
  }
  throw Error(ErrorCode::NotFound, "no checkpoint '" + ref + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string stats_line(const StepStats& s) {
  return "step " + std::to_string(s.step) + " reward=" + fixed(s.mean_reward) +
         " |adv|=" + fixed(s.mean_abs_advantage) + " kl=" + fixed(s.kl, 6) + " lr=" + fixed(s.lr, 6) +
         " groups=" + std::to_string(s.groups) + " excluded=" + std::to_string(s.excluded);
}

std::atomic<HttpApi*> g_serving{nullptr};

int exit_code_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::NotFound:
      return kConfigError;
    case ErrorCode::BackendUnavailable:
    case ErrorCode::ProtocolError:
    case ErrorCode::ImageUnresolvable:
    case ErrorCode::GenerationFailed:
    case ErrorCode::CaptionUnparseable:
    case ErrorCode::EditFailed:
    case ErrorCode::EditUnparseable:
    case ErrorCode::FilterExhausted:
    case ErrorCode::JudgeError:
    case ErrorCode::SummarizerError:
      return kBackendFailure;
    case ErrorCode::EmptyRun:
    case ErrorCode::EmptyPool:
    case ErrorCode::InsufficientGenerated:
    case ErrorCode::GroupTooSmall:
      return kEmptyData;
    default:
      return kFailure;
  }
}

}  // namespace

void stop_serving() {
  if (HttpApi* api = g_serving.load()) api->stop();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Auditor training, failure mining and dataset rectification"};
  app.require_subcommand(1);

  Common common;
  PoolArgs pool_args;

  // make-pool
  auto* make_pool_cmd = app.add_subcommand("make-pool", "Write a seeded mock image pool");
  std::string pool_out;
  std::size_t pool_n = 64;
  bool pool_questions = false;
  int pool_templates = kProbeTemplateCount;
  add_common(make_pool_cmd, common);
  make_pool_cmd->add_option("--out", pool_out, "Output directory")->required();
  make_pool_cmd->add_option("--n", pool_n, "Number of images");
  make_pool_cmd->add_flag("--questions", pool_questions, "Attach a source question to each image");
  make_pool_cmd->add_option("--templates", pool_templates, "Probe templates used for questions");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the auditor policy and write checkpoints");
  std::optional<int> steps;
  std::optional<int> workers;
  std::string enable;
  int log_every = 10;
  bool resume = false;
  add_common(train_cmd, common);
  add_config(train_cmd, common);
  add_pool(train_cmd, pool_args);
  train_cmd->add_option("--steps", steps, "Total optimizer steps");
  train_cmd->add_option("--workers", workers, "Scoring threads");
  train_cmd->add_option("--enable", enable, "Comma list of probe_question,image_regen,image_edit");
  train_cmd->add_option("--log-every", log_every, "Print every Nth step (text mode)");
  train_cmd->add_flag("--resume", resume, "Continue from resume.json of an aborted run");

  // audit
  auto* audit_cmd = app.add_subcommand("audit", "Single-pass discovery with a fixed policy");
  std::string checkpoint_ref;
  std::size_t n = 100;
  std::size_t top = 10;
  add_common(audit_cmd, common);
  add_config(audit_cmd, common);
  add_pool(audit_cmd, pool_args);
  audit_cmd->add_option("--checkpoint", checkpoint_ref, "Checkpoint path or id; the untrained policy when omitted");
  audit_cmd->add_option("--n", n, "Exemplars to realize");
  audit_cmd->add_option("--top", top, "Top cases in the report");
  audit_cmd->add_option("--workers", workers, "Scoring threads");
  audit_cmd->add_option("--enable", enable, "Comma list of probe_question,image_regen,image_edit");

  // synthesize
  auto* synth_cmd = app.add_subcommand("synthesize", "Write the deduplicated pseudo-labeled records of a run");
  std::string run_id;
  std::string out_path;
  add_common(synth_cmd, common);
  synth_cmd->add_option("--run", run_id, "Run id")->required();
  synth_cmd->add_option("--out", out_path, "Output JSONL");

  // mix
  auto* mix_cmd = app.add_subcommand("mix", "Mix generated records into an original dataset");
  std::string original;
  double ratio = 1.0;
  add_common(mix_cmd, common);
  mix_cmd->add_option("--original", original, "Original labeled JSONL")->required();
  mix_cmd->add_option("--run", run_id, "Run whose records are mixed in")->required();
  mix_cmd->add_option("--ratio", ratio, "Generated records per original record")->check(CLI::NonNegativeNumber);
  mix_cmd->add_option("--out", out_path, "Output JSONL");

  // bootstrap
  auto* boot_cmd = app.add_subcommand("bootstrap", "Multi-checkpoint pseudo-labeling rounds");
  std::string checkpoints_arg;
  int max_iter = 2;
  double delta = 0.005;
  add_common(boot_cmd, common);
  add_config(boot_cmd, common);
  add_pool(boot_cmd, pool_args);
  boot_cmd->add_option("--checkpoints", checkpoints_arg, "Comma list of checkpoint paths or ids")->required();
  boot_cmd->add_option("--max-iter", max_iter, "Iteration budget");
  boot_cmd->add_option("--delta", delta, "Convergence threshold on the round metric");
  boot_cmd->add_option("--workers", workers, "Scoring threads");
  boot_cmd->add_flag("--resume", resume, "Continue an interrupted bootstrap run");

  // report
  auto* report_cmd = app.add_subcommand("report", "Failure report of a run");
  add_common(report_cmd, common);
  report_cmd->add_option("--run", run_id, "Run id")->required();
  report_cmd->add_option("--top", top, "Top cases");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "REST API over the store");
  std::string bind = env_or("AUDITDM_BIND", "127.0.0.1:8080");
  add_common(serve_cmd, common);
  serve_cmd->add_option("--bind", bind, "host:port (default $AUDITDM_BIND)");

  // show-config
  auto* show_cmd = app.add_subcommand("show-config", "Print the validated effective config");
  add_common(show_cmd, common);
  add_config(show_cmd, common);
  show_cmd->add_option("--enable", enable, "Comma list of probe_question,image_regen,image_edit");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kConfigError;
  }

  auto apply_overrides = [&](PipelineConfig& cfg) {
    if (workers) cfg.workers = *workers;
    if (!enable.empty()) cfg.enabled = EnabledPolicies::from_names(split_list(enable));
  };

  try {
    if (*make_pool_cmd) {
      const auto items = make_mock_pool(pool_n, common.seed.value_or(0), pool_questions, pool_templates);
      write_pool(pool_out, items);
      if (common.json)
        out << json{{"path", pool_out}, {"items", items.size()}}.dump() << "\n";
      else
        out << "wrote " << items.size() << " pool items to " << pool_out << "\n";
      return kOk;
    }

    if (*show_cmd) {
      PipelineConfig cfg = load(common);
      apply_overrides(cfg);
      cfg.validate();
      out << json(cfg).dump(2) << "\n";
      return kOk;
    }

    if (*train_cmd) {
      PipelineConfig cfg = load(common);
      if (steps) cfg.schedule.total_steps = *steps;
      apply_overrides(cfg);
      Runtime rt(cfg);  // validates before anything touches the store
      const auto pool = pool_of(pool_args, rt.config());
      Store store(common.store);
      const std::string id = make_run_id("train", rt.config().hash(), rt.config().seed);
      RunWriter writer(store, id, !resume);
      TrainOptions opts;
      opts.checkpoint_dir = store.checkpoints_dir() / id;
      opts.step_log = writer.dir() / "steps.jsonl";
      opts.run = &writer;
      if (resume) opts.resume = opts.checkpoint_dir / "resume.json";
      if (!common.json && log_every > 0)
        opts.on_step = [&](const StepStats& s, const AuditorPolicy&) {
          if (s.step % log_every == 0) out << stats_line(s) << "\n";
        };
      const auto result = train(rt, pool, opts);
      json ckpts = json::array();
      ckpts.push_back({{"id", result.initial_checkpoint},
                       {"path", (opts.checkpoint_dir / (result.initial_checkpoint + ".json")).string()}});
      for (std::size_t i = 0; i < result.checkpoint_ids.size(); ++i)
        ckpts.push_back({{"id", result.checkpoint_ids[i]}, {"path", result.checkpoint_paths[i].string()}});
      const json final_stats = result.stats.empty() ? json(nullptr) : json(result.stats.back());
      if (common.json) {
        out << json{{"run_id", id}, {"checkpoints", ckpts}, {"final", final_stats}}.dump() << "\n";
      } else {
        for (const auto& c : ckpts) out << "checkpoint " << c["id"].get<std::string>() << " " << c["path"].get<std::string>() << "\n";
        if (!result.stats.empty()) out << "final " << stats_line(result.stats.back()) << "\n";
        out << "run " << id << "\n";
      }
      return kOk;
    }

    if (*audit_cmd) {
      PipelineConfig cfg = load(common);
      apply_overrides(cfg);
      Runtime rt(cfg);
      if (n == 0) throw Error(ErrorCode::EmptyRun, "n must be positive");
      Store store(common.store);
      AuditorPolicy policy = AuditorPolicy::uniform(rt.space().size());
      AuditOptions opts;
      opts.n = n;
      opts.seed = rt.config().seed;
      if (!checkpoint_ref.empty()) {
        const Checkpoint c = resolve_checkpoint(store, checkpoint_ref);
        policy = c.policy;
        opts.checkpoint_id = c.id;
      }
      const auto pool = pool_of(pool_args, rt.config());
      const std::string extra = opts.checkpoint_id.value_or("untrained") + "|" + json(policy.logits).dump() + "|" +
                                std::to_string(n) + "|" + std::to_string(pool.size());
      RunWriter writer(store, make_run_id("audit", rt.config().hash(), rt.config().seed, extra), true);
      auto result = run_audit(rt, policy, pool, opts, writer);
      const auto report = store.run(result.run_id)->report(top);
      out << (common.json ? report_json(report).dump() + "\n" : report_table(report));
      return kOk;
    }

    if (*synth_cmd) {
      Store store(common.store);
      const auto run = store.run(run_id);
      const auto records = dedup_records(generated_records(*run));
      if (records.empty()) throw Error(ErrorCode::InsufficientGenerated, "run " + run_id + " has no accepted records");
      const fs::path path = out_path.empty() ? store.datasets_dir() / (run_id + "-generated.jsonl") : fs::path(out_path);
      write_jsonl(path, records);
      if (common.json)
        out << json{{"path", path.string()}, {"records", records.size()}}.dump() << "\n";
      else
        out << "wrote " << records.size() << " records to " << path.string() << "\n";
      return kOk;
    }

    if (*mix_cmd) {
      Store store(common.store);
      const auto run = store.run(run_id);
      const fs::path path =
          out_path.empty() ? store.datasets_dir() / (run_id + "-mix.jsonl") : fs::path(out_path);
      const auto manifest =
          build_augmented_mixture(original, run_id, generated_records(*run), ratio, common.seed.value_or(0), path);
      // the manifest is printed in both modes
      out << json(manifest).dump(common.json ? -1 : 2) << "\n";
      return kOk;
    }

    if (*boot_cmd) {
      PipelineConfig cfg = load(common);
      apply_overrides(cfg);
      Runtime rt(cfg);
      if (max_iter < 1) throw Error(ErrorCode::ConfigError, "--max-iter must be at least 1");
      if (!(delta >= 0.0)) throw Error(ErrorCode::ConfigError, "--delta must be non-negative");
      Store store(common.store);
      std::vector<Checkpoint> checkpoints;
      for (const auto& ref : split_list(checkpoints_arg)) checkpoints.push_back(resolve_checkpoint(store, ref));
      if (checkpoints.empty()) throw Error(ErrorCode::ConfigError, "--checkpoints is empty");
      const auto pool = pool_of(pool_args, rt.config());

      std::string extra = std::to_string(pool.size());
      for (const auto& c : checkpoints) extra += "|" + c.id + ":" + json(c.policy.logits).dump();
      const std::string id = make_run_id("bootstrap", rt.config().hash(), rt.config().seed, extra);

      BootstrapState state;
      state.pool_uri = pool_args.dir.empty() ? "mock://pool/" + std::to_string(pool.size()) : pool_args.dir;
      state.convergence.max_iterations = max_iter;
      state.convergence.delta_threshold = delta;
      if (resume && store.has_run(id)) {
        for (const auto& d : store.run(id)->datasets) {
          state.iteration = d.at("iteration").get<int>();
          state.emitted_datasets.push_back(d.at("path").get<std::string>());
          state.convergence.metric_history.push_back(d.at("metric").get<double>());
        }
      }
      RunWriter writer(store, id, !resume);
      if (!resume || state.iteration == 0)
        writer.start("bootstrap", rt.config().hash(), {{"seed", rt.config().seed}, {"max_iterations", max_iter}});
      BootstrapOptions opts;
      opts.seed = rt.config().seed;
      opts.out_dir = store.datasets_dir();
      opts.run = &writer;
      auto result = run_bootstrap(rt, state, pool, checkpoints, opts);
      writer.finish(RunStatus::Completed);

      if (common.json) {
        json rounds = json::array();
        for (const auto& r : result.rounds)
          rounds.push_back({{"dataset", r.dataset.string()},
                            {"candidates", r.candidates},
                            {"attempts", r.attempts},
                            {"metric", r.metric}});
        out << json{{"run_id", id},
                    {"status", std::string(to_string(result.status))},
                    {"datasets", result.state.emitted_datasets},
                    {"rounds", rounds}}
                   .dump()
            << "\n";
      } else {
        for (const auto& r : result.rounds)
          out << "dataset " << r.dataset.string() << " candidates=" << r.candidates << " metric=" << fixed(r.metric)
              << "\n";
        out << "status " << to_string(result.status) << "\nrun " << id << "\n";
      }
      return kOk;
    }

    if (*report_cmd) {
      Store store(common.store);
      const auto report = store.run(run_id)->report(top);
      out << (common.json ? report_json(report).dump() + "\n" : report_table(report));
      return kOk;
    }

    if (*serve_cmd) {
      const auto [host, port] = parse_bind(bind);
      Store store(common.store);
      HttpApi api(store, env_or("AUDITDM_TOKEN", ""));
      g_serving.store(&api);
      if (!common.json) out << "serving " << common.store << " on " << host << ":" << port << std::endl;
      const bool ok = api.serve(host, port);
      g_serving.store(nullptr);
      if (!ok) {
        err << "error: cannot bind " << bind << "\n";
        return kConfigError;
      }
      return kOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_of(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace audit::cli
