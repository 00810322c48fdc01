#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "audit/backend.hpp"
#include "audit/scene.hpp"
#include "audit/util.hpp"

namespace audit {

// Probe template family. The enumerator value is the template index used by
// StrategyId.
enum class ProbeKind { Counting = 0, Color, Spatial, Presence, Size, Knowledge };
inline constexpr int kProbeTemplateCount = 6;

std::string_view probe_name(ProbeKind kind);
ProbeKind probe_kind(int template_idx);

struct ProbeQuestion {
  ProbeKind kind = ProbeKind::Counting;
  std::string subject;
  std::string other;  // spatial and size questions compare two categories
};

std::string format_probe(const ProbeQuestion& q);
std::optional<ProbeQuestion> parse_probe(std::string_view question);

std::string knowledge_of(std::string_view category);

// Weakness injectors. Each is a pure function of the faithful answer and the
// scene; an empty Weaknesses value is a faithful model.
struct Weaknesses {
  std::optional<int> count_cap;                        // report min(count, cap) when count > cap
  std::map<std::string, std::string> color_confusion;  // true color -> reported color
  std::set<std::string> hallucinate;                   // affirm presence when absent
  bool spatial_flip = false;                           // invert left/right answers
  bool size_invert = false;                            // name the smaller object
  std::map<std::string, std::string> knowledge_override;

  bool faithful() const;
};

inline constexpr std::string_view kCannotTell = "I cannot tell";

std::string faithful_answer(const ProbeQuestion& q, const SyntheticScene& scene);
std::string answer_question(std::string_view question, const SyntheticScene& scene,
                            const Weaknesses& weaknesses);

// Lowercase, strip punctuation and articles, number words to digits.
std::string normalize_answer(std::string_view answer);

// Target / reference model over synthetic scenes.
class MockAnswerer : public Backend {
 public:
  explicit MockAnswerer(Weaknesses weaknesses = {}) : weaknesses_(std::move(weaknesses)) {}
  std::string chat(const ChatRequest& request) override;
  const Weaknesses& weaknesses() const { return weaknesses_; }

 private:
  Weaknesses weaknesses_;
};

// Template-driven auditor. Uses the task and template hints of the request;
// the seed picks among candidate subjects so a fixed seed reproduces output.
class MockAuditor : public Backend {
 public:
  std::string chat(const ChatRequest& request) override;

  static std::string propose_question(ProbeKind kind, const SyntheticScene& scene, Rng& rng);
  static std::string propose_caption(ProbeKind kind, const SyntheticScene& scene, Rng& rng);
  static std::string propose_edit(ProbeKind kind, const SyntheticScene& scene, Rng& rng);
};

class MockImageGenerator : public Backend {
 public:
  ImageRef generate_image(const std::string& caption, std::uint64_t seed) override;
};

class MockImageEditor : public Backend {
 public:
  ImageRef edit_image(const ImageRef& image, const std::string& command,
                      std::uint64_t seed) override;
};

// SAME iff the normalized answers are equal.
class MockJudge : public Backend {
 public:
  std::string chat(const ChatRequest& request) override;
};

// Maps the question's probe kind to a fixed category and root cause.
class MockSummarizer : public Backend {
 public:
  std::string chat(const ChatRequest& request) override;
};

inline constexpr int kMockImageSize = 448;

}  // namespace audit
