#include "audit/rectify.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "audit/error.hpp"
#include "audit/parallel.hpp"
#include "audit/util.hpp"

namespace audit {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kBootstrapStrategyDomain = 0xB1;

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    for (const auto& l : lines) out << l << "\n";
    if (!out) throw Error(ErrorCode::FormatError, "cannot write '" + path.string() + "'");
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string_view to_string(LabelSource s) {
  return s == LabelSource::Original ? "original" : "ensemble_consensus";
}

void to_json(nlohmann::json& j, const DatasetRecord& r) {
  j = {{"question", r.question},
       {"image", r.image},
       {"label", r.label},
       {"label_source", std::string(to_string(r.label_source))},
       {"provenance", {{"auditor_checkpoint", r.provenance.auditor_checkpoint},
                       {"strategy", r.provenance.strategy},
                       {"run_id", r.provenance.run_id},
                       {"image_root", r.provenance.image_root}}},
       {"category", r.category}};
}

void from_json(const nlohmann::json& j, DatasetRecord& r) {
  r = {};
  r.question = j.at("question").get<std::string>();
  r.image = j.at("image").get<std::string>();
  r.label = j.at("label").get<std::string>();
  r.label_source = j.value("label_source", "original") == "original" ? LabelSource::Original
                                                                     : LabelSource::EnsembleConsensus;
  if (j.contains("provenance")) {
    const auto& p = j["provenance"];
    r.provenance = {p.value("auditor_checkpoint", ""), p.value("strategy", ""), p.value("run_id", ""),
                    p.value("image_root", "")};
  }
  r.category = j.value("category", "");
}

std::vector<DatasetRecord> generated_records(const RunState& run) {
  std::map<std::string, std::string> category_of;
  for (const auto& c : run.cases) category_of[c.record_id] = c.category;
  std::vector<DatasetRecord> out;
  for (const auto& rec : run.records) {
    if (!rec.rewardable() || !rec.consensus || rec.consensus->empty()) continue;
    const Exemplar* ex = run.exemplar(rec.exemplar_id);
    if (!ex) continue;
    DatasetRecord r;
    r.question = ex->question;
    r.image = ex->image.uri;
    r.label = *rec.consensus;
    r.label_source = LabelSource::EnsembleConsensus;
    r.provenance = {ex->auditor_checkpoint.value_or(""), ex->strategy.str(), run.id, ex->image_root};
    auto it = category_of.find(rec.id);
    if (it != category_of.end()) r.category = it->second;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DatasetRecord> dedup_records(const std::vector<DatasetRecord>& records, double threshold) {
  std::vector<DedupItem> items;
  items.reserve(records.size());
  for (const auto& r : records) items.push_back({r.question, r.provenance.image_root.empty() ? r.image : r.provenance.image_root});
  std::vector<DatasetRecord> out;
  for (std::size_t i : dedup_indices(items, threshold)) out.push_back(records[i]);
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<DatasetRecord>& records) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(nlohmann::json(r).dump());
  write_lines(path, lines);
}

void to_json(nlohmann::json& j, const MixtureManifest& m) {
  j = {{"original_count", m.original_count}, {"generated_count", m.generated_count},
       {"ratio", m.ratio},                   {"shuffle_seed", m.shuffle_seed},
       {"output_uri", m.output_uri},         {"run_id", m.run_id}};
}

void from_json(const nlohmann::json& j, MixtureManifest& m) {
  m.original_count = j.at("original_count").get<std::size_t>();
  m.generated_count = j.at("generated_count").get<std::size_t>();
  m.ratio = j.at("ratio").get<double>();
  m.shuffle_seed = j.at("shuffle_seed").get<std::uint64_t>();
  m.output_uri = j.at("output_uri").get<std::string>();
  m.run_id = j.value("run_id", "");
}

fs::path manifest_path(const fs::path& dataset) { return dataset.string() + ".manifest.json"; }

MixtureManifest build_augmented_mixture(const fs::path& original, const std::string& run_id,
                                        const std::vector<DatasetRecord>& generated, double ratio,
                                        std::uint64_t seed, const fs::path& output) {
  if (!std::isfinite(ratio) || ratio < 0.0) throw Error(ErrorCode::ConfigError, "ratio must be finite and >= 0");
  std::ifstream in(original);
  if (!in) throw Error(ErrorCode::FormatError, "cannot read original dataset '" + original.string() + "'");
  std::vector<std::string> originals;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    try {
      auto j = nlohmann::json::parse(t);
      const bool ok = j.is_object() && j.contains("question") && j["question"].is_string() && j.contains("label") &&
                      j["label"].is_string() && !j["label"].get<std::string>().empty();
      if (!ok) throw Error(ErrorCode::FormatError, "");
    } catch (const std::exception&) {
      throw Error(ErrorCode::FormatError,
                  original.string() + ":" + std::to_string(line_no) + ": expected {question, label, ...}");
    }
    originals.push_back(t);
  }

  MixtureManifest m;
  m.original_count = originals.size();
  m.ratio = ratio;
  m.shuffle_seed = seed;
  m.output_uri = output.string();
  m.run_id = run_id;
  const auto target = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(originals.size())));

  std::vector<DatasetRecord> usable;
  for (const auto& r : generated)
    if (r.label_source == LabelSource::EnsembleConsensus && !r.label.empty()) usable.push_back(r);
  usable = dedup_records(usable);
  if (usable.size() < target)
    throw Error(ErrorCode::InsufficientGenerated, "need " + std::to_string(target) + " generated records, run has " +
                                                      std::to_string(usable.size()) + " after filtering");

  std::vector<std::string> lines = originals;
  if (target > 0) {
    Rng pick(seed);
    pick.shuffle(usable);
    for (std::size_t i = 0; i < target; ++i) lines.push_back(nlohmann::json(usable[i]).dump());
    Rng interleave(derive_seed(seed, 1));
    interleave.shuffle(lines);
  }
  m.generated_count = target;
  write_lines(output, lines);
  write_lines(manifest_path(output), {nlohmann::json(m).dump(2)});
  return m;
}

std::string_view to_string(ConvergenceStatus s) {
  switch (s) {
    case ConvergenceStatus::Continue: return "continue";
    case ConvergenceStatus::Converged: return "converged";
    case ConvergenceStatus::BudgetExhausted: return "budget_exhausted";
  }
  return "continue";
}

void to_json(nlohmann::json& j, const BootstrapState& s) {
  j = {{"iteration", s.iteration},
       {"checkpoint_ids", s.checkpoint_ids},
       {"pool_uri", s.pool_uri},
       {"emitted_datasets", s.emitted_datasets},
       {"convergence", {{"metric_history", s.convergence.metric_history},
                        {"delta_threshold", s.convergence.delta_threshold},
                        {"max_iterations", s.convergence.max_iterations}}}};
}

void from_json(const nlohmann::json& j, BootstrapState& s) {
  s = {};
  s.iteration = j.value("iteration", 0);
  s.checkpoint_ids = j.value("checkpoint_ids", std::vector<std::string>{});
  s.pool_uri = j.value("pool_uri", "");
  s.emitted_datasets = j.value("emitted_datasets", std::vector<std::string>{});
  if (j.contains("convergence")) {
    const auto& c = j["convergence"];
    s.convergence.metric_history = c.value("metric_history", std::vector<double>{});
    s.convergence.delta_threshold = c.value("delta_threshold", 0.005);
    s.convergence.max_iterations = c.value("max_iterations", 2);
  }
}

ConvergenceStatus check_convergence(BootstrapState& state, double new_metric) {
  if (!std::isfinite(new_metric)) throw Error(ErrorCode::ProtocolError, "convergence metric must be finite");
  auto& history = state.convergence.metric_history;
  const bool had_previous = !history.empty();
  const double previous = had_previous ? history.back() : 0.0;
  history.push_back(new_metric);
  if (had_previous && std::abs(new_metric - previous) < state.convergence.delta_threshold)
    return ConvergenceStatus::Converged;
  if (state.iteration >= state.convergence.max_iterations) return ConvergenceStatus::BudgetExhausted;
  return ConvergenceStatus::Continue;
}

namespace {

struct JournalEntry {
  std::optional<DatasetRecord> record;
  int signal = 0;
};

// Reads complete entries and cuts the file back to the last one, so later
// appends never follow a torn line.
std::map<std::pair<std::size_t, std::size_t>, JournalEntry> read_journal(const fs::path& path) {
  std::map<std::pair<std::size_t, std::size_t>, JournalEntry> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::uintmax_t valid = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (in.eof()) break;  // no trailing newline: torn
    try {
      auto j = nlohmann::json::parse(line);
      JournalEntry e;
      if (!j.at("record").is_null()) e.record = j["record"].get<DatasetRecord>();
      e.signal = j.value("signal", 0);
      out[{j.at("i").get<std::size_t>(), j.at("c").get<std::size_t>()}] = std::move(e);
    } catch (const std::exception&) {
      break;
    }
    valid += line.size() + 1;
  }
  in.close();
  if (fs::file_size(path) != valid) fs::resize_file(path, valid);
  return out;
}

}  // namespace

BootstrapRound bootstrap_round(Runtime& rt, BootstrapState& state, const std::vector<PoolItem>& pool,
                               const std::vector<Checkpoint>& checkpoints, const BootstrapOptions& options) {
  if (pool.empty()) throw Error(ErrorCode::EmptyPool, "bootstrap pool is empty");
  if (checkpoints.empty()) throw Error(ErrorCode::ConfigError, "bootstrap needs at least one checkpoint");
  for (const auto& c : checkpoints)
    if (c.policy.logits.size() != rt.space().size())
      throw Error(ErrorCode::ConfigError, "checkpoint " + c.id + " does not match the strategy space");
  register_pool(rt, pool);
  if (state.checkpoint_ids.empty())
    for (const auto& c : checkpoints) state.checkpoint_ids.push_back(c.id);

  const int iteration = state.iteration + 1;
  const std::string run_id = options.run ? options.run->run_id() : "bootstrap";
  const std::string stem = run_id + "-iter" + std::to_string(iteration);
  fs::path journal = options.journal;
  if (journal.empty())
    journal = options.run ? options.run->dir() / ("journal-iter" + std::to_string(iteration) + ".jsonl")
                          : options.out_dir / (stem + ".journal");
  fs::create_directories(options.out_dir);
  auto done = read_journal(journal);

  std::vector<std::pair<std::size_t, std::size_t>> pending;
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t c = 0; c < checkpoints.size(); ++c)
      if (!done.count({i, c})) pending.emplace_back(i, c);

  const std::size_t chunk_size = 256;
  for (std::size_t begin = 0; begin < pending.size(); begin += chunk_size) {
    const std::size_t end = std::min(pending.size(), begin + chunk_size);
    std::vector<Attempt> attempts(end - begin);
    auto id_of = [&](std::size_t i, std::size_t c) {
      return run_id + "-b" + std::to_string(iteration) + "-i" + std::to_string(i) + "-c" + std::to_string(c);
    };
    parallel_for(attempts.size(), rt.config().workers, [&](std::size_t k) {
      const auto [i, c] = pending[begin + k];
      const double u = Rng(derive_seed(options.seed, iteration, i, c, kBootstrapStrategyDomain)).unit();
      attempts[k] = run_attempt(rt, checkpoints[c].policy, pool[i], u, derive_seed(options.seed, iteration, i, c),
                                id_of(i, c), checkpoints[c].id);
    });
    std::ofstream jout(journal, std::ios::app);
    for (std::size_t k = 0; k < attempts.size(); ++k) {
      const auto [i, c] = pending[begin + k];
      const Attempt& a = attempts[k];
      if (options.run) log_attempt(*options.run, a, id_of(i, c));
      JournalEntry e;
      if (a.accepted() && a.record->consensus) {
        const Exemplar& ex = *a.exemplar;
        DatasetRecord r;
        r.question = ex.question;
        r.image = ex.image.uri;
        r.label = *a.record->consensus;
        r.label_source = LabelSource::EnsembleConsensus;
        r.provenance = {checkpoints[c].id, ex.strategy.str(), run_id, ex.image_root};
        if (a.record->signal == 1)
          r.category = categorize(rt.gateway(), rt.config().summarizer, ex.question, a.record->target_answer,
                                  *a.record->consensus)
                           .category;
        e.record = std::move(r);
        e.signal = a.record->signal;
      }
      jout << nlohmann::json{{"i", i}, {"c", c}, {"record", e.record ? nlohmann::json(*e.record) : nlohmann::json(nullptr)},
                             {"signal", e.signal}}.dump()
           << "\n";
      done[{i, c}] = std::move(e);
    }
    jout.flush();
  }

  BootstrapRound round;
  std::vector<DatasetRecord> candidates;
  std::size_t failures = 0;
  for (const auto& [key, e] : done) {
    ++round.attempts;
    failures += e.signal == 1 ? 1 : 0;
    if (e.record) candidates.push_back(*e.record);
  }
  round.candidates = candidates.size();
  round.metric = round.attempts == 0 ? 0.0 : static_cast<double>(failures) / static_cast<double>(round.attempts);
  const auto dataset = dedup_records(candidates);
  round.dataset = options.out_dir / (stem + ".jsonl");
  write_jsonl(round.dataset, dataset);

  state.iteration = iteration;
  state.emitted_datasets.push_back(round.dataset.string());
  if (options.run)
    options.run->emit(EventType::DatasetEmitted, {{"path", round.dataset.string()},
                                                  {"iteration", iteration},
                                                  {"records", dataset.size()},
                                                  {"candidates", round.candidates},
                                                  {"metric", round.metric},
                                                  {"hash", file_hash(round.dataset)}});
  return round;
}

BootstrapResult run_bootstrap(Runtime& rt, BootstrapState state, const std::vector<PoolItem>& pool,
                              const std::vector<Checkpoint>& checkpoints, const BootstrapOptions& options) {
  BootstrapResult result;
  if (state.iteration >= state.convergence.max_iterations) {
    result.state = std::move(state);
    result.status = ConvergenceStatus::BudgetExhausted;
    return result;
  }
  for (;;) {
    auto round = bootstrap_round(rt, state, pool, checkpoints, options);
    result.rounds.push_back(round);
    result.status = check_convergence(state, round.metric);
    if (result.status != ConvergenceStatus::Continue) break;
  }
  result.state = std::move(state);
  return result;
}

}  // namespace audit
