#include "audit/prompts.hpp"

#include <fstream>
#include <sstream>

#include "audit/error.hpp"
#include "audit/util.hpp"

namespace audit {

namespace {

std::string one_line(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c == '\n' || c == '\r') c = ' ';
  return trim(out);
}

std::optional<std::string> field_after(std::string_view text, std::string_view label) {
  const auto pos = text.find(label);
  if (pos == std::string_view::npos) return std::nullopt;
  auto rest = text.substr(pos + label.size());
  const auto eol = rest.find('\n');
  return trim(rest.substr(0, eol));
}

}  // namespace

PromptSet PromptSet::defaults() {
  PromptSet p;
  p.caption =
      "You are given an image. Produce a detailed, literal caption that would allow a model to "
      "regenerate the image, but also introduce small alterations to certain visual attributes. "
      "Return a single final caption describing the modified version only.";
  p.edit =
      "You are given an image. Generate a single image-editing command that describes how to "
      "modify the image. The modification must remain plausible in the real world. The command "
      "should be specific, actionable, and unambiguous. Return the editing command only.";
  p.question =
      "You are given an image. Generate a single question that can be answered solely based on "
      "its visible content. Return the question only.";
  p.baseline_caption =
      "You are given an image. Produce a detailed, literal caption that would allow a model to "
      "regenerate the image, but introduce small changes that are easy for models to get wrong. "
      "Return a single caption describing the modified version only.";
  p.baseline_edit =
      "You are given an image. Generate a single image-editing command that makes a realistic "
      "change but is challenging for vision models. The modification must remain plausible in "
      "the real world. The command should be specific, actionable, and unambiguous. Return the "
      "editing command only.";
  p.baseline_question =
      "You are given an image. Generate a single question answerable from its visible content "
      "but challenging for vision-language models. Return the question only.";
  return p;
}

PromptSet PromptSet::parse(std::string_view text) {
  PromptSet p = defaults();
  auto assign = [&](const std::string& name, const std::string& body) {
    const std::string value = trim(body);
    if (value.empty()) throw Error(ErrorCode::ConfigError, "prompt '" + name + "' is empty");
    if (name == "p_c") p.caption = value;
    else if (name == "p_e") p.edit = value;
    else if (name == "p_q") p.question = value;
    else if (name == "p_c_b") p.baseline_caption = value;
    else if (name == "p_e_b") p.baseline_edit = value;
    else if (name == "p_q_b") p.baseline_question = value;
    else throw Error(ErrorCode::ConfigError, "unknown prompt name '" + name + "'");
  };

  std::istringstream in{std::string(text)};
  std::string line;
  std::optional<std::string> current;
  std::string body;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.size() > 2 && t.front() == '[' && t.back() == ']') {
      if (current) assign(*current, body);
      current = t.substr(1, t.size() - 2);
      body.clear();
      continue;
    }
    if (!current) {
      if (!t.empty() && t.front() != '#')
        throw Error(ErrorCode::ConfigError, "prompt text before any [name] header");
      continue;
    }
    if (!body.empty()) body += '\n';
    body += line;
  }
  if (current) assign(*current, body);
  return p;
}

PromptSet PromptSet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read prompt file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool PromptSet::complete() const {
  return !caption.empty() && !edit.empty() && !question.empty() && !baseline_caption.empty() &&
         !baseline_edit.empty() && !baseline_question.empty();
}

std::string judge_prompt(std::string_view a, std::string_view b) {
  return "Do the following two answers to the same question mean the same thing?\n"
         "Answer A: " + one_line(a) + "\n"
         "Answer B: " + one_line(b) + "\n"
         "Reply with exactly SAME or DIFFERENT.";
}

std::optional<std::pair<std::string, std::string>> parse_judge_prompt(std::string_view text) {
  auto a = field_after(text, "Answer A: ");
  auto b = field_after(text, "Answer B: ");
  if (!a || !b) return std::nullopt;
  return std::make_pair(*a, *b);
}

std::string summarizer_prompt(const SummaryRequest& req) {
  return "A vision-language model answered a question differently from the consensus of a "
         "reference ensemble. Summarize the root cause and the weakness category.\n"
         "Question: " + one_line(req.question) + "\n"
         "Target answer: " + one_line(req.target_answer) + "\n"
         "Consensus answer: " + one_line(req.consensus) + "\n"
         "Reply with two lines:\nCATEGORY: <short weakness category>\nROOT_CAUSE: <one sentence>";
}

std::optional<SummaryRequest> parse_summarizer_prompt(std::string_view text) {
  auto q = field_after(text, "Question: ");
  auto t = field_after(text, "Target answer: ");
  auto c = field_after(text, "Consensus answer: ");
  if (!q || !t || !c) return std::nullopt;
  return SummaryRequest{*q, *t, *c};
}

std::optional<std::pair<std::string, std::string>> parse_summary_reply(std::string_view reply) {
  auto cat = field_after(reply, "CATEGORY:");
  auto cause = field_after(reply, "ROOT_CAUSE:");
  if (!cat || cat->empty()) return std::nullopt;
  return std::make_pair(*cat, cause.value_or(""));
}

}  // namespace audit
