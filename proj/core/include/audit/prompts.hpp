#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace audit {

// Instruction prompts handed to the auditor. `caption`, `edit` and
// `question` drive the trained auditor; the baseline_* variants drive the
// prompt-engineering baseline.
struct PromptSet {
  std::string caption;
  std::string edit;
  std::string question;
  std::string baseline_caption;
  std::string baseline_edit;
  std::string baseline_question;

  static PromptSet defaults();

  // Plain-text override file: a `[name]` header line followed by the prompt
  // text, for any of p_c, p_e, p_q, p_c_b, p_e_b, p_q_b. Unlisted prompts
  // keep their defaults. Throws Error(ConfigError) on unknown names or empty
  // bodies.
  static PromptSet load(const std::filesystem::path& path);
  static PromptSet parse(std::string_view text);

  bool complete() const;
};

// Remote judge protocol: the judge must reply with exactly SAME or DIFFERENT.
std::string judge_prompt(std::string_view a, std::string_view b);
std::optional<std::pair<std::string, std::string>> parse_judge_prompt(std::string_view text);

// Summarizer protocol: reply is two lines, `CATEGORY: ...` and `ROOT_CAUSE: ...`.
struct SummaryRequest {
  std::string question;
  std::string target_answer;
  std::string consensus;
};
std::string summarizer_prompt(const SummaryRequest& req);
std::optional<SummaryRequest> parse_summarizer_prompt(std::string_view text);
std::optional<std::pair<std::string, std::string>> parse_summary_reply(std::string_view reply);

}  // namespace audit
