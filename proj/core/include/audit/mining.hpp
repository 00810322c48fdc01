#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "audit/gateway.hpp"

namespace audit {

enum class VerdictLabel { TargetFailure, Ambiguous, Unanswerable };
enum class CaseStatus { Pending, Adjudicated };

std::string_view to_string(VerdictLabel l);
std::optional<VerdictLabel> verdict_label_from_string(std::string_view s);
std::string_view to_string(CaseStatus s);

struct Verdict {
  std::string case_id;
  VerdictLabel label = VerdictLabel::TargetFailure;
  std::string annotator;
  std::int64_t timestamp = 0;  // unix milliseconds
};

void to_json(nlohmann::json& j, const Verdict& v);
void from_json(const nlohmann::json& j, Verdict& v);

struct FailureCase {
  std::string id;
  std::string exemplar_id;
  std::string record_id;
  std::string question;
  std::string image_root;
  std::string category;
  std::string root_cause;
  std::string dedup_key;
  CaseStatus status = CaseStatus::Pending;
  std::optional<Verdict> verdict;
  bool duplicate = false;  // an earlier case has the same or a near-identical key

  bool active() const { return !duplicate; }
};

void to_json(nlohmann::json& j, const FailureCase& c);
void from_json(const nlohmann::json& j, FailureCase& c);

// ---- categorization ----

// Lowercase, punctuation stripped, whitespace collapsed, each word singular.
std::string canonical_category(std::string_view raw);

struct Categorization {
  std::string category;
  std::string root_cause;
};

// Asks the summarizer handle for a weakness category and root cause. Any
// summarizer failure yields ("uncategorized", "").
Categorization categorize(Gateway& gateway, const std::string& summarizer_handle,
                          const std::string& question, const std::string& target_answer,
                          const std::string& consensus);

// ---- deduplication ----

// Lowercase, punctuation removed, whitespace collapsed.
std::string question_fingerprint(std::string_view question);
std::string dedup_key(std::string_view question, std::string_view image_root);
// 1 - levenshtein(a, b) / max(|a|, |b|) on fingerprints; 1 for two empty strings.
double normalized_similarity(std::string_view a, std::string_view b);

inline constexpr double kNearDuplicateThreshold = 0.9;

struct DedupItem {
  std::string question;
  std::string image_root;
};

// Same lineage root and identical fingerprint or similarity >= threshold.
bool is_duplicate(const DedupItem& earlier, const DedupItem& later, double threshold = kNearDuplicateThreshold);

// Indices of the items kept, in input order. An item is dropped when an
// earlier kept item with the same lineage root has identical fingerprint or
// similarity >= threshold.
std::vector<std::size_t> dedup_indices(const std::vector<DedupItem>& items,
                                       double threshold = kNearDuplicateThreshold);

// Marks later duplicates in place (stable) and returns the active cases.
std::vector<FailureCase> dedup(std::vector<FailureCase> cases, double threshold = kNearDuplicateThreshold);
void mark_duplicates(std::vector<FailureCase>& cases, double threshold = kNearDuplicateThreshold);

// ---- metrics ----

// Raw: cases / attempts. With verdicts: cases labeled target_failure over
// attempts minus cases labeled unanswerable. Throws EmptyRun when there were
// no attempts.
double search_success_rate(std::size_t attempts, const std::vector<FailureCase>& cases, bool use_verdicts);

struct CategoryRate {
  std::string name;
  std::size_t count = 0;
  double rate = 0.0;
};

struct CategoryRates {
  std::vector<CategoryRate> categories;  // sorted by count desc, then name
  std::size_t total_cases = 0;

  std::vector<CategoryRate> top(std::size_t n) const;
};

// Per-category share of active cases. Throws EmptyRun with no active case.
CategoryRates category_rates(const std::vector<FailureCase>& cases);

struct RunReport {
  std::string run_id;
  std::size_t attempts = 0;
  double success_rate = 0.0;
  double success_rate_adjudicated = 0.0;
  std::map<std::string, std::size_t> verdicts;
  CategoryRates categories;
  std::vector<FailureCase> top_cases;
};

RunReport build_report(const std::string& run_id, std::size_t attempts, const std::vector<FailureCase>& cases,
                       std::size_t top_n = 10);
nlohmann::json report_json(const RunReport& report);
std::string report_table(const RunReport& report);

}  // namespace audit
