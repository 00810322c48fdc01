#include "audit/config.hpp"

#include <fstream>
#include <set>

#include "audit/error.hpp"
#include "audit/remote_backend.hpp"
#include "audit/util.hpp"

namespace audit {

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(ErrorCode::ConfigError, "unknown key '" + key + "' in " + where);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigError, what);
}

}  // namespace

void to_json(nlohmann::json& j, const Weaknesses& w) {
  j = nlohmann::json::object();
  if (w.count_cap) j["count_cap"] = *w.count_cap;
  if (!w.color_confusion.empty()) j["color_confusion"] = w.color_confusion;
  if (!w.hallucinate.empty()) j["hallucinate"] = w.hallucinate;
  if (w.spatial_flip) j["spatial_flip"] = true;
  if (w.size_invert) j["size_invert"] = true;
  if (!w.knowledge_override.empty()) j["knowledge_override"] = w.knowledge_override;
}

void from_json(const nlohmann::json& j, Weaknesses& w) {
  check_keys(j, {"count_cap", "color_confusion", "hallucinate", "spatial_flip", "size_invert", "knowledge_override"},
             "weaknesses");
  w = {};
  if (j.contains("count_cap")) w.count_cap = j["count_cap"].get<int>();
  w.color_confusion = j.value("color_confusion", std::map<std::string, std::string>{});
  w.hallucinate = j.value("hallucinate", std::set<std::string>{});
  w.spatial_flip = j.value("spatial_flip", false);
  w.size_invert = j.value("size_invert", false);
  w.knowledge_override = j.value("knowledge_override", std::map<std::string, std::string>{});
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  auto backends = nlohmann::json::array();
  for (const auto& b : c.backends) {
    nlohmann::json e = {{"id", b.handle.id},
                        {"role", std::string(to_string(b.handle.role))},
                        {"kind", std::string(to_string(b.handle.kind))},
                        {"max_parallel", b.handle.max_parallel},
                        {"rate_limit", b.handle.rate_limit},
                        {"retry", {{"max_attempts", b.handle.retry.max_attempts},
                                   {"base_backoff_ms", b.handle.retry.base_backoff_ms}}}};
    if (!b.handle.endpoint.empty()) e["endpoint"] = b.handle.endpoint;
    if (!b.handle.model_name.empty()) e["model"] = b.handle.model_name;
    if (!b.token_env.empty()) e["token_env"] = b.token_env;
    if (!b.weaknesses.faithful()) e["weaknesses"] = b.weaknesses;
    backends.push_back(std::move(e));
  }
  j = {{"backends", backends},
       {"auditor", c.auditor},
       {"image_gen", c.image_gen},
       {"image_edit", c.image_edit},
       {"target", c.target},
       {"references", c.references},
       {"judge", c.consensus.judge_handle},
       {"summarizer", c.summarizer},
       {"consensus", {{"mode", std::string(to_string(c.consensus.mode))}, {"threshold", c.consensus.threshold}}},
       {"baseline_prompts", c.baseline_prompts},
       {"templates", c.templates},
       {"enabled", c.enabled.names()},
       {"preserve_positions", c.preserve_positions},
       {"filter_retries", c.filter_retries},
       {"grpo", {{"group_size", c.group_size}, {"epsilon", c.epsilon}}},
       {"schedule", c.schedule},
       {"seed", c.seed},
       {"workers", c.workers},
       {"remote_auditor", c.remote_auditor}};
  if (c.prompts_file) j["prompts_file"] = *c.prompts_file;
}

PipelineConfig parse_config(const nlohmann::json& j) {
  try {
    check_keys(j, {"backends", "auditor", "image_gen", "image_edit", "target", "references", "judge", "summarizer",
                   "consensus", "prompts_file", "baseline_prompts", "templates", "enabled", "preserve_positions",
                   "filter_retries", "grpo", "schedule", "seed", "workers", "remote_auditor"},
               "config");
    PipelineConfig c;
    for (const auto& b : j.value("backends", nlohmann::json::array())) {
      check_keys(b, {"id", "role", "kind", "endpoint", "model", "max_parallel", "rate_limit", "retry", "token_env",
                     "weaknesses"},
                 "backend");
      BackendSpec s;
      s.handle.id = b.at("id").get<std::string>();
      s.handle.role = role_from_string(b.at("role").get<std::string>());
      s.handle.kind = backend_kind_from_string(b.value("kind", "mock"));
      s.handle.endpoint = b.value("endpoint", "");
      s.handle.model_name = b.value("model", "");
      s.handle.max_parallel = b.value("max_parallel", 4);
      s.handle.rate_limit = b.value("rate_limit", 0.0);
      if (b.contains("retry")) {
        check_keys(b["retry"], {"max_attempts", "base_backoff_ms"}, "retry");
        s.handle.retry.max_attempts = b["retry"].value("max_attempts", 3);
        s.handle.retry.base_backoff_ms = b["retry"].value("base_backoff_ms", 100);
      }
      s.token_env = b.value("token_env", "");
      if (b.contains("weaknesses")) s.weaknesses = b["weaknesses"].get<Weaknesses>();
      c.backends.push_back(std::move(s));
    }
    c.auditor = j.value("auditor", "");
    c.image_gen = j.value("image_gen", "");
    c.image_edit = j.value("image_edit", "");
    c.target = j.value("target", "");
    c.references = j.value("references", std::vector<std::string>{});
    c.consensus.judge_handle = j.value("judge", "");
    c.summarizer = j.value("summarizer", "");
    if (j.contains("consensus")) {
      check_keys(j["consensus"], {"mode", "threshold"}, "consensus");
      c.consensus.mode = consensus_mode_from_string(j["consensus"].value("mode", "fraction"));
      c.consensus.threshold = j["consensus"].value("threshold", 2.0 / 3.0);
    }
    if (j.contains("prompts_file")) c.prompts_file = j["prompts_file"].get<std::string>();
    c.baseline_prompts = j.value("baseline_prompts", false);
    c.templates = j.value("templates", kProbeTemplateCount);
    if (j.contains("enabled")) c.enabled = EnabledPolicies::from_names(j["enabled"].get<std::vector<std::string>>());
    c.preserve_positions = j.value("preserve_positions", false);
    c.filter_retries = j.value("filter_retries", 5);
    if (j.contains("grpo")) {
      check_keys(j["grpo"], {"group_size", "epsilon"}, "grpo");
      c.group_size = j["grpo"].value("group_size", 8);
      c.epsilon = j["grpo"].value("epsilon", 1e-4);
    }
    if (j.contains("schedule")) {
      check_keys(j["schedule"], {"total_steps", "warmup_fraction", "lr_init", "lr_final", "batch_size_groups",
                                 "clip_eps", "kl_coeff", "checkpoint_every"},
                 "schedule");
      c.schedule = j["schedule"].get<TrainSchedule>();
    }
    c.seed = j.value("seed", std::uint64_t{0});
    c.workers = j.value("workers", 1);
    c.remote_auditor = j.value("remote_auditor", false);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    throw Error(ErrorCode::ConfigError, e.what());
  }
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return parse_config(j);
}

void PipelineConfig::validate() const {
  require(!backends.empty(), "no backends registered");
  std::map<std::string, const BackendSpec*> by_id;
  for (const auto& b : backends) {
    require(!b.handle.id.empty(), "backend id is empty");
    require(by_id.emplace(b.handle.id, &b).second, "duplicate backend id '" + b.handle.id + "'");
    require(b.handle.max_parallel >= 1, b.handle.id + ": max_parallel must be >= 1");
    require(b.handle.rate_limit >= 0.0, b.handle.id + ": rate_limit must be >= 0");
    require(b.handle.retry.max_attempts >= 1, b.handle.id + ": retry.max_attempts must be >= 1");
    require(b.handle.retry.base_backoff_ms >= 0, b.handle.id + ": retry.base_backoff_ms must be >= 0");
    if (b.handle.kind == BackendKind::Remote) require(!b.handle.endpoint.empty(), b.handle.id + ": remote backend needs an endpoint");
    const bool answers = b.handle.role == Role::Target || b.handle.role == Role::Reference;
    require(b.weaknesses.faithful() || (answers && b.handle.kind == BackendKind::Mock),
            b.handle.id + ": weaknesses apply to mock target/reference backends only");
  }
  auto expect_role = [&](const std::string& id, Role role, const std::string& key) {
    require(!id.empty(), "'" + key + "' is not set");
    auto it = by_id.find(id);
    require(it != by_id.end(), key + " handle '" + id + "' is not registered");
    require(it->second->handle.role == role,
            key + " handle '" + id + "' has role " + std::string(to_string(it->second->handle.role)));
  };
  expect_role(auditor, Role::Auditor, "auditor");
  expect_role(target, Role::Target, "target");
  expect_role(consensus.judge_handle, Role::Judge, "judge");
  expect_role(summarizer, Role::Summarizer, "summarizer");
  require(!references.empty(), "reference ensemble is empty");
  std::set<std::string> refs;
  for (const auto& r : references) {
    expect_role(r, Role::Reference, "reference");
    require(refs.insert(r).second, "reference '" + r + "' listed twice");
    require(r != target, "target is in the reference ensemble");
  }
  require(enabled.any(), "enabled generation policies must be non-empty");
  if (enabled.image_regen) expect_role(image_gen, Role::ImageGen, "image_gen");
  if (enabled.image_edit) expect_role(image_edit, Role::ImageEdit, "image_edit");
  const bool mock_auditor = by_id.at(auditor)->handle.kind == BackendKind::Mock;
  require(templates >= 1, "templates must be >= 1");
  require(!mock_auditor || templates <= kProbeTemplateCount, "the mock auditor knows at most 6 templates");
  require(!remote_auditor || !mock_auditor, "remote_auditor needs a remote auditor backend");
  require(filter_retries >= 1, "filter_retries must be >= 1");
  require(group_size >= 2, "grpo.group_size must be >= 2");
  require(epsilon > 0.0, "grpo.epsilon must be > 0");
  require(workers >= 1, "workers must be >= 1");
  schedule.validate();
  consensus.validate();
  if (prompts_file) {
    auto p = PromptSet::load(*prompts_file);
    require(p.complete(), "prompts file leaves a prompt empty");
  }
}

std::string PipelineConfig::hash() const { return hex64(fnv1a64(nlohmann::json(*this).dump())); }

PipelineConfig mock_config(std::uint64_t seed) {
  PipelineConfig c;
  auto add = [&](std::string id, Role role, Weaknesses w = {}) {
    BackendSpec s;
    s.handle.id = std::move(id);
    s.handle.role = role;
    s.handle.kind = BackendKind::Mock;
    s.handle.retry.base_backoff_ms = 0;
    s.weaknesses = std::move(w);
    c.backends.push_back(std::move(s));
  };
  Weaknesses counting;
  counting.count_cap = 3;
  add("auditor", Role::Auditor);
  add("imagegen", Role::ImageGen);
  add("imageedit", Role::ImageEdit);
  add("target", Role::Target, counting);
  add("ref-a", Role::Reference);
  add("ref-b", Role::Reference);
  add("ref-c", Role::Reference);
  add("judge", Role::Judge);
  add("summarizer", Role::Summarizer);
  c.auditor = "auditor";
  c.image_gen = "imagegen";
  c.image_edit = "imageedit";
  c.target = "target";
  c.references = {"ref-a", "ref-b", "ref-c"};
  c.consensus.judge_handle = "judge";
  c.summarizer = "summarizer";
  c.schedule.total_steps = 300;
  c.schedule.batch_size_groups = 4;
  c.schedule.lr_init = 0.5;
  c.schedule.lr_final = 0.05;
  c.schedule.checkpoint_every = 100;
  c.seed = seed;
  return c;
}

std::shared_ptr<Backend> make_backend(const BackendSpec& spec) {
  if (spec.handle.kind == BackendKind::Remote) {
    BackendHandle h = spec.handle;
    if (!spec.token_env.empty())
      if (const char* t = std::getenv(spec.token_env.c_str())) h.bearer_token = t;
    return std::make_shared<RemoteBackend>(h);
  }
  switch (spec.handle.role) {
    case Role::Auditor: return std::make_shared<MockAuditor>();
    case Role::Target:
    case Role::Reference: return std::make_shared<MockAnswerer>(spec.weaknesses);
    case Role::ImageGen: return std::make_shared<MockImageGenerator>();
    case Role::ImageEdit: return std::make_shared<MockImageEditor>();
    case Role::Judge: return std::make_shared<MockJudge>();
    case Role::Summarizer: return std::make_shared<MockSummarizer>();
  }
  throw Error(ErrorCode::ConfigError, "unsupported backend role");
}

namespace {

PipelineConfig validated(PipelineConfig c) {
  c.validate();
  return c;
}

}  // namespace

Runtime::Runtime(PipelineConfig config) : config_(validated(std::move(config))), space_(config_.templates) {
  for (const auto& b : config_.backends) {
    BackendHandle h = b.handle;
    if (!b.token_env.empty())
      if (const char* t = std::getenv(b.token_env.c_str())) h.bearer_token = t;
    gateway_.add(h, make_backend(b));
  }
  ExemplarGenConfig gen;
  gen.auditor = config_.auditor;
  gen.image_gen = config_.image_gen;
  gen.image_edit = config_.image_edit;
  gen.prompts = config_.prompts_file ? PromptSet::load(*config_.prompts_file) : PromptSet::defaults();
  gen.baseline_prompts = config_.baseline_prompts;
  gen.preserve_positions = config_.preserve_positions;
  gen.filter_retries = config_.filter_retries;
  generator_ = std::make_unique<ExemplarGenerator>(gateway_, gen);
  scorer_ = std::make_unique<Scorer>(gateway_, config_.target, config_.references, config_.consensus,
                                     config_.workers > 1 ? 4 : 1);
}

}  // namespace audit
