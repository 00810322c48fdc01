#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "audit/gateway.hpp"
#include "audit/prompts.hpp"
#include "audit/strategy.hpp"

namespace audit {

enum class DirectiveKind { Caption, EditCommand, Question };

std::string_view to_string(DirectiveKind k);

// One auditor output. `seed` is the seed of the auditor call and of the
// downstream generator call it drives, so directives can be replayed.
struct GenerationDirective {
  std::string id;
  DirectiveKind kind = DirectiveKind::Question;
  std::string text;
  std::string source_image;
  std::string auditor_handle;
  std::uint64_t seed = 0;
  int template_idx = 0;
};

void to_json(nlohmann::json& j, const GenerationDirective& d);
void from_json(const nlohmann::json& j, GenerationDirective& d);

struct Exemplar {
  std::string id;
  std::string context_id;  // source image id
  std::string question;
  ImageRef image;
  std::string image_root;  // lineage root of `image`
  Pairing pairing = Pairing::QstarI;
  StrategyId strategy;
  std::vector<GenerationDirective> directives;
  std::optional<std::string> source_question;
  std::optional<std::string> auditor_checkpoint;
  std::uint64_t seed = 0;

  // Pairing/origin consistency.
  bool consistent() const;
};

void to_json(nlohmann::json& j, const Exemplar& e);
void from_json(const nlohmann::json& j, Exemplar& e);

struct ExemplarGenConfig {
  std::string auditor;
  std::string image_gen;   // may be empty when regeneration is disabled
  std::string image_edit;  // may be empty when editing is disabled
  PromptSet prompts = PromptSet::defaults();
  bool baseline_prompts = false;
  bool preserve_positions = false;
  int filter_retries = 5;
};

// True when an edit command would relocate an object. Grammar commands are
// judged by verb; free-form commands by movement vocabulary.
bool moves_objects(std::string_view command);

// Drives the auditor through the gateway and assembles exemplars. Stateless
// apart from configuration; safe to share between threads.
class ExemplarGenerator {
 public:
  ExemplarGenerator(Gateway& gateway, ExemplarGenConfig config);

  GenerationDirective propose_caption(const ImageRef& image, int template_idx, std::uint64_t seed);
  // Rejects position-changing commands when preserve_positions is set and
  // re-asks up to filter_retries times; then throws FilterExhausted.
  GenerationDirective propose_edit(const ImageRef& image, int template_idx, std::uint64_t seed,
                                   bool preserve_positions);
  GenerationDirective propose_edit(const ImageRef& image, int template_idx, std::uint64_t seed) {
    return propose_edit(image, template_idx, seed, config_.preserve_positions);
  }
  GenerationDirective propose_question(const ImageRef& image, int template_idx, std::uint64_t seed);

  // Executes the strategy's image policy, then its question policy. Nothing
  // is returned unless every step succeeded.
  Exemplar realize(const StrategyId& strategy, const ImageRef& image,
                   const std::optional<std::string>& source_question, std::uint64_t seed,
                   const std::string& exemplar_id = {});

  // Re-executes recorded directives with their stored seeds.
  Exemplar replay(const Exemplar& recorded);

  const ExemplarGenConfig& config() const { return config_; }
  Gateway& gateway() { return gateway_; }

 private:
  GenerationDirective ask(AuditorTask task, DirectiveKind kind, const std::string& prompt,
                          const ImageRef& image, int template_idx, std::uint64_t seed);

  Gateway& gateway_;
  ExemplarGenConfig config_;
};

}  // namespace audit
