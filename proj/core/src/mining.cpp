#include "audit/mining.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

#include "audit/error.hpp"
#include "audit/prompts.hpp"
#include "audit/scene.hpp"
#include "audit/util.hpp"

namespace audit {

std::string_view to_string(VerdictLabel l) {
  switch (l) {
    case VerdictLabel::TargetFailure: return "target_failure";
    case VerdictLabel::Ambiguous: return "ambiguous";
    case VerdictLabel::Unanswerable: return "unanswerable";
  }
  return "target_failure";
}

std::optional<VerdictLabel> verdict_label_from_string(std::string_view s) {
  for (VerdictLabel l : {VerdictLabel::TargetFailure, VerdictLabel::Ambiguous, VerdictLabel::Unanswerable})
    if (to_string(l) == s) return l;
  return std::nullopt;
}

std::string_view to_string(CaseStatus s) { return s == CaseStatus::Pending ? "pending" : "adjudicated"; }

void to_json(nlohmann::json& j, const Verdict& v) {
  j = {{"case_id", v.case_id},
       {"label", std::string(to_string(v.label))},
       {"annotator", v.annotator},
       {"timestamp", v.timestamp}};
}

void from_json(const nlohmann::json& j, Verdict& v) {
  v.case_id = j.at("case_id").get<std::string>();
  auto label = verdict_label_from_string(j.at("label").get<std::string>());
  if (!label) throw Error(ErrorCode::FormatError, "invalid verdict label");
  v.label = *label;
  v.annotator = j.value("annotator", "");
  v.timestamp = j.value("timestamp", std::int64_t{0});
}

void to_json(nlohmann::json& j, const FailureCase& c) {
  j = {{"id", c.id},
       {"exemplar_id", c.exemplar_id},
       {"record_id", c.record_id},
       {"question", c.question},
       {"image_root", c.image_root},
       {"category", c.category},
       {"root_cause", c.root_cause},
       {"dedup_key", c.dedup_key},
       {"status", std::string(to_string(c.status))},
       {"duplicate", c.duplicate},
       {"verdict", c.verdict ? nlohmann::json(*c.verdict) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, FailureCase& c) {
  c = {};
  c.id = j.at("id").get<std::string>();
  c.exemplar_id = j.value("exemplar_id", "");
  c.record_id = j.value("record_id", "");
  c.question = j.value("question", "");
  c.image_root = j.value("image_root", "");
  c.category = j.value("category", "");
  c.root_cause = j.value("root_cause", "");
  c.dedup_key = j.value("dedup_key", "");
  c.status = j.value("status", "pending") == "adjudicated" ? CaseStatus::Adjudicated : CaseStatus::Pending;
  c.duplicate = j.value("duplicate", false);
  if (j.contains("verdict") && !j["verdict"].is_null()) c.verdict = j["verdict"].get<Verdict>();
}

std::string canonical_category(std::string_view raw) {
  std::string s = to_lower(raw);
  for (char& c : s)
    if (std::ispunct(static_cast<unsigned char>(c)) && c != '-') c = ' ';
  auto words = split_words(s);
  for (auto& w : words) w = singular(w);
  return join(words, " ");
}

Categorization categorize(Gateway& gateway, const std::string& summarizer_handle, const std::string& question,
                          const std::string& target_answer, const std::string& consensus) {
  try {
    ChatRequest req;
    req.text = summarizer_prompt({question, target_answer, consensus});
    req.sampling = default_sampling(Role::Summarizer);
    auto parsed = parse_summary_reply(gateway.chat(summarizer_handle, req).text);
    if (!parsed) return {"uncategorized", ""};
    std::string category = canonical_category(parsed->first);
    if (category.empty()) return {"uncategorized", ""};
    return {category, trim(parsed->second)};
  } catch (const std::exception&) {
    return {"uncategorized", ""};
  }
}

std::string question_fingerprint(std::string_view question) {
  std::string s = to_lower(question);
  for (char& c : s)
    if (std::ispunct(static_cast<unsigned char>(c))) c = ' ';
  return join(split_words(s), " ");
}

std::string dedup_key(std::string_view question, std::string_view image_root) {
  return question_fingerprint(question) + "|" + std::string(image_root);
}

double normalized_similarity(std::string_view a_raw, std::string_view b_raw) {
  const std::string a = question_fingerprint(a_raw);
  const std::string b = question_fingerprint(b_raw);
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return 1.0 - static_cast<double>(prev[b.size()]) / static_cast<double>(std::max(a.size(), b.size()));
}

bool is_duplicate(const DedupItem& earlier, const DedupItem& later, double threshold) {
  if (earlier.image_root != later.image_root) return false;
  const std::string a = question_fingerprint(earlier.question);
  const std::string b = question_fingerprint(later.question);
  return a == b || normalized_similarity(a, b) >= threshold;
}

std::vector<std::size_t> dedup_indices(const std::vector<DedupItem>& items, double threshold) {
  std::vector<std::size_t> kept;
  std::map<std::string, std::vector<std::size_t>> by_root;  // root -> kept indices
  std::set<std::string> exact;                              // dedup keys kept
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string key = dedup_key(items[i].question, items[i].image_root);
    if (exact.count(key)) continue;
    auto& siblings = by_root[items[i].image_root];
    const bool near = std::any_of(siblings.begin(), siblings.end(),
                                  [&](std::size_t k) { return is_duplicate(items[k], items[i], threshold); });
    if (near) continue;
    exact.insert(key);
    siblings.push_back(i);
    kept.push_back(i);
  }
  return kept;
}

void mark_duplicates(std::vector<FailureCase>& cases, double threshold) {
  std::vector<DedupItem> items;
  items.reserve(cases.size());
  for (const auto& c : cases) items.push_back({c.question, c.image_root});
  std::vector<bool> keep(cases.size(), false);
  for (std::size_t i : dedup_indices(items, threshold)) keep[i] = true;
  for (std::size_t i = 0; i < cases.size(); ++i) cases[i].duplicate = !keep[i];
}

std::vector<FailureCase> dedup(std::vector<FailureCase> cases, double threshold) {
  mark_duplicates(cases, threshold);
  std::erase_if(cases, [](const FailureCase& c) { return c.duplicate; });
  return cases;
}

double search_success_rate(std::size_t attempts, const std::vector<FailureCase>& cases, bool use_verdicts) {
  if (attempts == 0) throw Error(ErrorCode::EmptyRun, "no generation attempts");
  if (!use_verdicts) return static_cast<double>(cases.size()) / static_cast<double>(attempts);
  std::size_t failures = 0;
  std::size_t unanswerable = 0;
  for (const auto& c : cases) {
    if (!c.verdict) continue;
    if (c.verdict->label == VerdictLabel::TargetFailure) ++failures;
    if (c.verdict->label == VerdictLabel::Unanswerable) ++unanswerable;
  }
  const std::size_t denom = attempts - std::min(attempts, unanswerable);
  return denom == 0 ? 0.0 : static_cast<double>(failures) / static_cast<double>(denom);
}

std::vector<CategoryRate> CategoryRates::top(std::size_t n) const {
  return {categories.begin(), categories.begin() + static_cast<long>(std::min(n, categories.size()))};
}

CategoryRates category_rates(const std::vector<FailureCase>& cases) {
  std::map<std::string, std::size_t> counts;
  CategoryRates out;
  for (const auto& c : cases) {
    if (!c.active()) continue;
    ++counts[c.category];
    ++out.total_cases;
  }
  if (out.total_cases == 0) throw Error(ErrorCode::EmptyRun, "no active failure cases");
  for (const auto& [name, n] : counts)
    out.categories.push_back({name, n, static_cast<double>(n) / static_cast<double>(out.total_cases)});
  std::stable_sort(out.categories.begin(), out.categories.end(),
                   [](const CategoryRate& a, const CategoryRate& b) { return a.count > b.count; });
  return out;
}

RunReport build_report(const std::string& run_id, std::size_t attempts, const std::vector<FailureCase>& cases,
                       std::size_t top_n) {
  RunReport r;
  r.run_id = run_id;
  r.attempts = attempts;
  if (attempts > 0) {
    r.success_rate = search_success_rate(attempts, cases, false);
    r.success_rate_adjudicated = search_success_rate(attempts, cases, true);
  }
  for (const auto& c : cases)
    if (c.verdict) ++r.verdicts[std::string(to_string(c.verdict->label))];
  if (std::any_of(cases.begin(), cases.end(), [](const FailureCase& c) { return c.active(); }))
    r.categories = category_rates(cases);
  for (const auto& c : cases) {
    if (r.top_cases.size() >= top_n) break;
    if (c.active()) r.top_cases.push_back(c);
  }
  return r;
}

nlohmann::json report_json(const RunReport& r) {
  auto cats = nlohmann::json::array();
  for (const auto& c : r.categories.categories) cats.push_back({{"name", c.name}, {"count", c.count}, {"rate", c.rate}});
  return {{"run_id", r.run_id},
          {"attempts", r.attempts},
          {"cases", r.categories.total_cases},
          {"success_rate", r.success_rate},
          {"success_rate_adjudicated", r.success_rate_adjudicated},
          {"verdicts", r.verdicts},
          {"categories", cats},
          {"top_cases", r.top_cases}};
}

std::string report_table(const RunReport& r) {
  std::ostringstream out;
  char line[160];
  out << "run " << r.run_id << "\n";
  std::snprintf(line, sizeof(line), "attempts %zu  success_rate %.4f  adjudicated %.4f\n", r.attempts,
                r.success_rate, r.success_rate_adjudicated);
  out << line;
  std::snprintf(line, sizeof(line), "%-24s %8s %8s\n", "category", "count", "rate");
  out << line;
  for (const auto& c : r.categories.categories) {
    std::snprintf(line, sizeof(line), "%-24s %8zu %8.4f\n", c.name.c_str(), c.count, c.rate);
    out << line;
  }
  return out.str();
}

}  // namespace audit
