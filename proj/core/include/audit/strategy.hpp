#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace audit {

enum class ImagePolicy { Keep, Regenerate, Edit };
enum class QuestionPolicy { Keep, Probe };

// Which halves of the question-image pair the auditor produced.
//   QstarIstar: new question on a counterfactual image
//   QstarI:     new question on the source image
//   QIstar:     source question on a counterfactual image
enum class Pairing { QstarIstar, QstarI, QIstar };

std::string_view to_string(ImagePolicy p);
std::string_view to_string(QuestionPolicy p);
std::string_view to_string(Pairing p);
ImagePolicy image_policy_from_string(std::string_view s);
QuestionPolicy question_policy_from_string(std::string_view s);
Pairing pairing_from_string(std::string_view s);

// Throws for (keep, keep), which produces no new exemplar.
Pairing pairing_of(ImagePolicy image, QuestionPolicy question);

struct StrategyId {
  ImagePolicy image_policy = ImagePolicy::Keep;
  QuestionPolicy question_policy = QuestionPolicy::Probe;
  int template_idx = 0;

  // "<image>/<question>/<template>", e.g. "edit/probe/0".
  std::string str() const;
  static StrategyId parse(std::string_view s);

  friend bool operator==(const StrategyId&, const StrategyId&) = default;
};

void to_json(nlohmann::json& j, const StrategyId& s);
void from_json(const nlohmann::json& j, StrategyId& s);

// The three ablation toggles: probe_question, image_regen, image_edit.
struct EnabledPolicies {
  bool probe_question = true;
  bool image_regen = true;
  bool image_edit = true;

  static EnabledPolicies from_names(const std::vector<std::string>& names);
  std::vector<std::string> names() const;
  bool any() const { return probe_question || image_regen || image_edit; }
  bool allows(const StrategyId& s) const;
};

// Finite action space of the desk-scale auditor: every (image policy,
// question policy, template) triple except (keep, keep, *).
class StrategySpace {
 public:
  explicit StrategySpace(int template_count);

  std::size_t size() const { return strategies_.size(); }
  int template_count() const { return template_count_; }
  const StrategyId& at(std::size_t i) const { return strategies_.at(i); }
  const std::vector<StrategyId>& all() const { return strategies_; }
  std::optional<std::size_t> index_of(const StrategyId& s) const;

  // Strategies available for a context. Keep-question strategies need a
  // source question.
  std::vector<bool> mask(const EnabledPolicies& enabled, bool has_source_question) const;

 private:
  int template_count_;
  std::vector<StrategyId> strategies_;
};

}  // namespace audit
