#include "audit/exemplar.hpp"

#include <set>

#include "audit/error.hpp"
#include "audit/scene.hpp"
#include "audit/util.hpp"

namespace audit {

namespace {

// Seed domains inside one realization.
enum : int { kCaptionSeed = 1, kEditSeed = 2, kQuestionSeed = 3 };

}  // namespace

std::string_view to_string(DirectiveKind k) {
  switch (k) {
    case DirectiveKind::Caption: return "caption";
    case DirectiveKind::EditCommand: return "edit_command";
    case DirectiveKind::Question: return "question";
  }
  return "question";
}

static DirectiveKind directive_kind_from_string(std::string_view s) {
  for (DirectiveKind k : {DirectiveKind::Caption, DirectiveKind::EditCommand, DirectiveKind::Question})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::FormatError, "unknown directive kind '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const GenerationDirective& d) {
  j = {{"id", d.id},
       {"kind", std::string(to_string(d.kind))},
       {"text", d.text},
       {"source_image", d.source_image},
       {"auditor_handle", d.auditor_handle},
       {"seed", d.seed},
       {"template_idx", d.template_idx}};
}

void from_json(const nlohmann::json& j, GenerationDirective& d) {
  d.id = j.at("id").get<std::string>();
  d.kind = directive_kind_from_string(j.at("kind").get<std::string>());
  d.text = j.at("text").get<std::string>();
  d.source_image = j.value("source_image", "");
  d.auditor_handle = j.value("auditor_handle", "");
  d.seed = j.value("seed", std::uint64_t{0});
  d.template_idx = j.value("template_idx", 0);
}

bool Exemplar::consistent() const {
  switch (pairing) {
    case Pairing::QstarI:
      return image.origin == ImageOrigin::Source;
    case Pairing::QIstar:
      return source_question.has_value() && image.origin != ImageOrigin::Source;
    case Pairing::QstarIstar:
      return image.origin != ImageOrigin::Source;
  }
  return false;
}

void to_json(nlohmann::json& j, const Exemplar& e) {
  j = {{"id", e.id},
       {"context_id", e.context_id},
       {"question", e.question},
       {"image", e.image},
       {"image_root", e.image_root},
       {"pairing", std::string(to_string(e.pairing))},
       {"strategy", e.strategy},
       {"directives", e.directives},
       {"seed", e.seed}};
  if (e.source_question) j["source_question"] = *e.source_question;
  if (e.auditor_checkpoint) j["auditor_checkpoint"] = *e.auditor_checkpoint;
}

void from_json(const nlohmann::json& j, Exemplar& e) {
  e = {};
  e.id = j.at("id").get<std::string>();
  e.context_id = j.value("context_id", "");
  e.question = j.at("question").get<std::string>();
  e.image = j.at("image").get<ImageRef>();
  e.image_root = j.value("image_root", e.image.uri);
  e.pairing = pairing_from_string(j.at("pairing").get<std::string>());
  e.strategy = j.at("strategy").get<StrategyId>();
  e.directives = j.value("directives", std::vector<GenerationDirective>{});
  if (j.contains("source_question")) e.source_question = j["source_question"].get<std::string>();
  if (j.contains("auditor_checkpoint")) e.auditor_checkpoint = j["auditor_checkpoint"].get<std::string>();
  e.seed = j.value("seed", std::uint64_t{0});
}

bool moves_objects(std::string_view command) {
  if (auto cmd = parse_edit(command)) return cmd->verb == EditVerb::Move;
  static const std::set<std::string> kMotion = {"move",     "moves",      "moving",   "shift",
                                                "shifts",   "relocate",   "relocates", "reposition",
                                                "repositions", "slide",  "slides",   "swap"};
  std::string s = to_lower(command);
  for (char& c : s)
    if (!std::isalpha(static_cast<unsigned char>(c))) c = ' ';
  for (const auto& w : split_words(s))
    if (kMotion.count(w)) return true;
  return false;
}

ExemplarGenerator::ExemplarGenerator(Gateway& gateway, ExemplarGenConfig config)
    : gateway_(gateway), config_(std::move(config)) {
  if (config_.filter_retries < 1)
    throw Error(ErrorCode::ConfigError, "filter_retries must be >= 1");
}

GenerationDirective ExemplarGenerator::ask(AuditorTask task, DirectiveKind kind,
                                           const std::string& prompt, const ImageRef& image,
                                           int template_idx, std::uint64_t seed) {
  ChatRequest req;
  req.text = prompt;
  req.images = {image};
  req.sampling = default_sampling(Role::Auditor);
  req.sampling.seed = seed;
  req.task = task;
  req.template_idx = template_idx;
  const std::string text = trim(gateway_.chat(config_.auditor, req).text);
  if (text.empty()) throw Error(ErrorCode::ProtocolError, "auditor returned an empty directive");
  GenerationDirective d;
  d.kind = kind;
  d.text = text;
  d.source_image = image.uri;
  d.auditor_handle = config_.auditor;
  d.seed = seed;
  d.template_idx = template_idx;
  return d;
}

GenerationDirective ExemplarGenerator::propose_caption(const ImageRef& image, int template_idx,
                                                       std::uint64_t seed) {
  const auto& p = config_.baseline_prompts ? config_.prompts.baseline_caption : config_.prompts.caption;
  return ask(AuditorTask::Caption, DirectiveKind::Caption, p, image, template_idx, seed);
}

GenerationDirective ExemplarGenerator::propose_edit(const ImageRef& image, int template_idx,
                                                    std::uint64_t seed, bool preserve_positions) {
  const auto& p = config_.baseline_prompts ? config_.prompts.baseline_edit : config_.prompts.edit;
  if (!preserve_positions)
    return ask(AuditorTask::Edit, DirectiveKind::EditCommand, p, image, template_idx, seed);

  const bool mock_auditor = gateway_.handle(config_.auditor).kind == BackendKind::Mock;
  for (int attempt = 0; attempt < config_.filter_retries; ++attempt) {
    const std::uint64_t s = attempt == 0 ? seed : derive_seed(seed, attempt);
    auto d = ask(AuditorTask::Edit, DirectiveKind::EditCommand, p, image, template_idx, s);
    if (moves_objects(d.text)) continue;
    if (mock_auditor && !parse_edit(d.text)) continue;
    return d;
  }
  throw Error(ErrorCode::FilterExhausted,
              "no position-preserving edit after " + std::to_string(config_.filter_retries) + " tries");
}

GenerationDirective ExemplarGenerator::propose_question(const ImageRef& image, int template_idx,
                                                        std::uint64_t seed) {
  const auto& p =
      config_.baseline_prompts ? config_.prompts.baseline_question : config_.prompts.question;
  return ask(AuditorTask::Question, DirectiveKind::Question, p, image, template_idx, seed);
}

Exemplar ExemplarGenerator::realize(const StrategyId& strategy, const ImageRef& image,
                                    const std::optional<std::string>& source_question,
                                    std::uint64_t seed, const std::string& exemplar_id) {
  const Pairing pairing = pairing_of(strategy.image_policy, strategy.question_policy);
  if (strategy.question_policy == QuestionPolicy::Keep && (!source_question || source_question->empty()))
    throw Error(ErrorCode::ProtocolError, "keep-question strategy needs a source question");

  Exemplar ex;
  ex.id = exemplar_id;
  ex.context_id = image.uri;
  ex.strategy = strategy;
  ex.pairing = pairing;
  ex.seed = seed;
  ex.image = image;

  switch (strategy.image_policy) {
    case ImagePolicy::Keep:
      break;
    case ImagePolicy::Regenerate: {
      auto d = propose_caption(image, strategy.template_idx, derive_seed(seed, kCaptionSeed));
      ex.image = gateway_.generate_image(config_.image_gen, d.text, d.seed);
      ex.directives.push_back(std::move(d));
      break;
    }
    case ImagePolicy::Edit: {
      auto d = propose_edit(image, strategy.template_idx, derive_seed(seed, kEditSeed));
      ex.image = gateway_.edit_image(config_.image_edit, image, d.text, d.seed);
      ex.directives.push_back(std::move(d));
      break;
    }
  }

  if (strategy.question_policy == QuestionPolicy::Probe) {
    auto d = propose_question(ex.image, strategy.template_idx, derive_seed(seed, kQuestionSeed));
    ex.question = d.text;
    ex.directives.push_back(std::move(d));
  } else {
    ex.question = *source_question;
    ex.source_question = source_question;
  }

  for (std::size_t i = 0; i < ex.directives.size(); ++i)
    ex.directives[i].id = exemplar_id + "/d" + std::to_string(i);
  ex.image_root = gateway_.images().contains(ex.image.uri) ? gateway_.images().lineage_root(ex.image.uri)
                                                           : ex.image.uri;
  if (!ex.consistent())
    throw Error(ErrorCode::ProtocolError, "exemplar violates pairing invariants");
  return ex;
}

Exemplar ExemplarGenerator::replay(const Exemplar& recorded) {
  Exemplar ex = recorded;
  auto source = gateway_.images().get(recorded.context_id);
  if (!source) throw Error(ErrorCode::ImageUnresolvable, "unknown context '" + recorded.context_id + "'");
  ex.image = *source;
  for (const auto& d : recorded.directives) {
    switch (d.kind) {
      case DirectiveKind::Caption:
        ex.image = gateway_.generate_image(config_.image_gen, d.text, d.seed);
        break;
      case DirectiveKind::EditCommand:
        ex.image = gateway_.edit_image(config_.image_edit, ex.image, d.text, d.seed);
        break;
      case DirectiveKind::Question:
        ex.question = d.text;
        break;
    }
  }
  ex.image_root = gateway_.images().lineage_root(ex.image.uri);
  return ex;
}

}  // namespace audit
