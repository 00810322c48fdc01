#include "audit/strategy.hpp"

#include <charconv>

#include "audit/error.hpp"

namespace audit {

std::string_view to_string(ImagePolicy p) {
  switch (p) {
    case ImagePolicy::Keep: return "keep";
    case ImagePolicy::Regenerate: return "regenerate";
    case ImagePolicy::Edit: return "edit";
  }
  return "keep";
}

std::string_view to_string(QuestionPolicy p) { return p == QuestionPolicy::Keep ? "keep" : "probe"; }

std::string_view to_string(Pairing p) {
  switch (p) {
    case Pairing::QstarIstar: return "QstarIstar";
    case Pairing::QstarI: return "QstarI";
    case Pairing::QIstar: return "QIstar";
  }
  return "QstarIstar";
}

ImagePolicy image_policy_from_string(std::string_view s) {
  if (s == "keep") return ImagePolicy::Keep;
  if (s == "regenerate") return ImagePolicy::Regenerate;
  if (s == "edit") return ImagePolicy::Edit;
  throw Error(ErrorCode::FormatError, "unknown image policy '" + std::string(s) + "'");
}

QuestionPolicy question_policy_from_string(std::string_view s) {
  if (s == "keep") return QuestionPolicy::Keep;
  if (s == "probe") return QuestionPolicy::Probe;
  throw Error(ErrorCode::FormatError, "unknown question policy '" + std::string(s) + "'");
}

Pairing pairing_from_string(std::string_view s) {
  for (Pairing p : {Pairing::QstarIstar, Pairing::QstarI, Pairing::QIstar})
    if (to_string(p) == s) return p;
  throw Error(ErrorCode::FormatError, "unknown pairing '" + std::string(s) + "'");
}

Pairing pairing_of(ImagePolicy image, QuestionPolicy question) {
  if (question == QuestionPolicy::Probe)
    return image == ImagePolicy::Keep ? Pairing::QstarI : Pairing::QstarIstar;
  if (image == ImagePolicy::Keep)
    throw Error(ErrorCode::ProtocolError, "strategy (keep, keep) produces no exemplar");
  return Pairing::QIstar;
}

std::string StrategyId::str() const {
  return std::string(to_string(image_policy)) + "/" + std::string(to_string(question_policy)) + "/" +
         std::to_string(template_idx);
}

StrategyId StrategyId::parse(std::string_view s) {
  const auto a = s.find('/');
  const auto b = s.find('/', a == std::string_view::npos ? a : a + 1);
  if (a == std::string_view::npos || b == std::string_view::npos)
    throw Error(ErrorCode::FormatError, "malformed strategy '" + std::string(s) + "'");
  StrategyId out;
  out.image_policy = image_policy_from_string(s.substr(0, a));
  out.question_policy = question_policy_from_string(s.substr(a + 1, b - a - 1));
  const auto t = s.substr(b + 1);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out.template_idx);
  if (ec != std::errc() || ptr != t.data() + t.size() || out.template_idx < 0)
    throw Error(ErrorCode::FormatError, "malformed strategy template in '" + std::string(s) + "'");
  if (out.image_policy == ImagePolicy::Keep && out.question_policy == QuestionPolicy::Keep)
    throw Error(ErrorCode::FormatError, "strategy '" + std::string(s) + "' produces no exemplar");
  return out;
}

void to_json(nlohmann::json& j, const StrategyId& s) { j = s.str(); }
void from_json(const nlohmann::json& j, StrategyId& s) { s = StrategyId::parse(j.get<std::string>()); }

EnabledPolicies EnabledPolicies::from_names(const std::vector<std::string>& names) {
  EnabledPolicies e{false, false, false};
  for (const auto& n : names) {
    if (n == "probe_question") e.probe_question = true;
    else if (n == "image_regen") e.image_regen = true;
    else if (n == "image_edit") e.image_edit = true;
    else throw Error(ErrorCode::ConfigError, "unknown generation policy '" + n + "'");
  }
  return e;
}

std::vector<std::string> EnabledPolicies::names() const {
  std::vector<std::string> out;
  if (probe_question) out.push_back("probe_question");
  if (image_regen) out.push_back("image_regen");
  if (image_edit) out.push_back("image_edit");
  return out;
}

bool EnabledPolicies::allows(const StrategyId& s) const {
  if (s.image_policy == ImagePolicy::Keep && s.question_policy == QuestionPolicy::Keep) return false;
  if (s.question_policy == QuestionPolicy::Probe && !probe_question) return false;
  if (s.image_policy == ImagePolicy::Regenerate && !image_regen) return false;
  if (s.image_policy == ImagePolicy::Edit && !image_edit) return false;
  return true;
}

StrategySpace::StrategySpace(int template_count) : template_count_(template_count) {
  if (template_count < 1) throw Error(ErrorCode::ConfigError, "template family must be non-empty");
  for (ImagePolicy ip : {ImagePolicy::Keep, ImagePolicy::Regenerate, ImagePolicy::Edit})
    for (QuestionPolicy qp : {QuestionPolicy::Keep, QuestionPolicy::Probe}) {
      if (ip == ImagePolicy::Keep && qp == QuestionPolicy::Keep) continue;
      for (int t = 0; t < template_count; ++t) strategies_.push_back({ip, qp, t});
    }
}

std::optional<std::size_t> StrategySpace::index_of(const StrategyId& s) const {
  for (std::size_t i = 0; i < strategies_.size(); ++i)
    if (strategies_[i] == s) return i;
  return std::nullopt;
}

std::vector<bool> StrategySpace::mask(const EnabledPolicies& enabled, bool has_source_question) const {
  std::vector<bool> m(strategies_.size());
  for (std::size_t i = 0; i < strategies_.size(); ++i) {
    const auto& s = strategies_[i];
    m[i] = enabled.allows(s) && (s.question_policy == QuestionPolicy::Probe || has_source_question);
  }
  return m;
}

}  // namespace audit
