#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "audit/exemplar.hpp"
#include "audit/gateway.hpp"

namespace audit {

enum class ConsensusMode { Unanimous, Fraction };
enum class FilterOutcome { Accepted, NoConsensus, JudgeError };

std::string_view to_string(ConsensusMode m);
std::string_view to_string(FilterOutcome o);
ConsensusMode consensus_mode_from_string(std::string_view s);
FilterOutcome filter_outcome_from_string(std::string_view s);

struct ConsensusPolicy {
  ConsensusMode mode = ConsensusMode::Fraction;
  double threshold = 2.0 / 3.0;  // fraction mode; must lie in (0.5, 1]
  std::string judge_handle;

  void validate() const;
};

struct Judgement {
  std::string a;
  std::string b;
  int differs = 0;
};

struct ReferenceAnswer {
  std::string handle_id;
  std::string answer;
};

struct DisagreementRecord {
  std::string id;
  std::string exemplar_id;
  std::string target_answer;
  std::vector<ReferenceAnswer> reference_answers;
  std::optional<std::string> consensus;
  int signal = 0;
  FilterOutcome filter_outcome = FilterOutcome::NoConsensus;
  std::vector<Judgement> judge_transcript;
  std::string error;  // set when filter_outcome is judge_error

  // Counts toward training reward only when accepted.
  bool rewardable() const { return filter_outcome == FilterOutcome::Accepted; }
};

void to_json(nlohmann::json& j, const DisagreementRecord& r);
void from_json(const nlohmann::json& j, DisagreementRecord& r);

// Clusters answers by the transitive closure of pairwise judge agreement and
// returns the index of a representative of the largest cluster when it
// covers enough of the ensemble. `differs(i, j)` returns 1 when answers i
// and j differ.
template <typename Differs>
std::optional<std::size_t> consensus_index(std::size_t n, const ConsensusPolicy& policy,
                                           Differs&& differs);

// Scores exemplars: target and references answer with greedy decoding, the
// judge compares, consensus is formed, and the binary signal is derived.
class Scorer {
 public:
  Scorer(Gateway& gateway, std::string target, std::vector<std::string> references,
         ConsensusPolicy policy, int parallelism = 1);

  // 1 iff the answers differ in meaning. Throws Error(JudgeError).
  int judge(const std::string& a, const std::string& b, std::vector<Judgement>* transcript = nullptr);

  std::optional<std::string> consensus(const std::vector<std::string>& answers,
                                       std::vector<Judgement>* transcript = nullptr);

  DisagreementRecord score(const Exemplar& exemplar, const std::string& record_id = {});

  const std::string& target() const { return target_; }
  const std::vector<std::string>& references() const { return references_; }
  const ConsensusPolicy& policy() const { return policy_; }

 private:
  Gateway& gateway_;
  std::string target_;
  std::vector<std::string> references_;
  ConsensusPolicy policy_;
  int parallelism_;
};

// ---- implementation of the template ----

namespace detail {
std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i);
bool meets_threshold(std::size_t cluster, std::size_t total, const ConsensusPolicy& policy);
}  // namespace detail

template <typename Differs>
std::optional<std::size_t> consensus_index(std::size_t n, const ConsensusPolicy& policy,
                                           Differs&& differs) {
  std::vector<std::size_t> parent(n);
  for (std::size_t i = 0; i < n; ++i) parent[i] = i;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::size_t ri = detail::find_root(parent, i);
      const std::size_t rj = detail::find_root(parent, j);
      if (ri == rj) continue;  // already joined through the closure
      if (differs(i, j) == 0) parent[std::max(ri, rj)] = std::min(ri, rj);
    }
  std::vector<std::size_t> size(n, 0);
  for (std::size_t i = 0; i < n; ++i) ++size[detail::find_root(parent, i)];
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (size[i] > size[best]) best = i;
  if (n == 0 || !detail::meets_threshold(size[best], n, policy)) return std::nullopt;
  return best;  // roots are the lowest index of their cluster
}

}  // namespace audit
