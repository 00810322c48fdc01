#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace audit {

// Categorical auditor policy over a StrategySpace. Contexts may mask out
// strategies; probabilities are then renormalized over the allowed subset.
struct AuditorPolicy {
  std::vector<double> logits;
  int version = 0;
  std::optional<std::string> parent_checkpoint;

  static AuditorPolicy uniform(std::size_t n) { return {std::vector<double>(n, 0.0), 0, std::nullopt}; }

  // Empty mask means all strategies allowed. Masked entries get probability
  // 0 and log-probability -inf.
  std::vector<double> probabilities(const std::vector<bool>& mask = {}) const;
  std::vector<double> log_probabilities(const std::vector<bool>& mask = {}) const;
  bool finite() const;
};

std::vector<double> masked_log_softmax(std::span<const double> logits, const std::vector<bool>& mask);

struct GroupSample {
  std::size_t strategy = 0;  // index into the StrategySpace
  std::string exemplar_id;
  double reward = 0.0;
  double logprob_old = 0.0;
};

// k samples that share one context.
struct GroupBatch {
  std::string context_id;
  std::vector<GroupSample> samples;
  std::vector<bool> mask;  // strategies available in this context; empty = all
  double epsilon = 1e-4;

  std::vector<double> rewards() const;
};

struct AdvantageBatch {
  std::vector<double> advantages;
};

// A_k = (s_k - mean(s)) / (std(s) + eps) with the population standard
// deviation. A zero-variance group yields all zeros. Throws GroupTooSmall for
// fewer than two rewards.
AdvantageBatch compute_advantages(std::span<const double> rewards, double epsilon);

struct TrainSchedule {
  int total_steps = 1000;
  double warmup_fraction = 0.1;
  double lr_init = 3e-6;
  double lr_final = 1e-6;
  int batch_size_groups = 256;
  double clip_eps = 0.2;
  double kl_coeff = 0.01;
  int checkpoint_every = 250;

  int warmup_steps() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainSchedule& s);
void from_json(const nlohmann::json& j, TrainSchedule& s);

// Linear warmup from 0 to lr_init, then cosine decay to lr_final at
// total_steps. Throws StepOutOfRange outside [0, total_steps].
double lr_at(int step, const TrainSchedule& schedule);

// Steps that write a checkpoint: every checkpoint_every steps plus the final
// step.
std::vector<int> checkpoint_steps(const TrainSchedule& schedule);
bool is_checkpoint_step(int step, const TrainSchedule& schedule);

// Clipped surrogate minus KL penalty, evaluated at `logits`:
//   J = mean_i min(rho_i A_i, clip(rho_i, 1-c, 1+c) A_i) - beta * mean_g KL(pi_g || pi_old_g)
// with rho_i = exp(log pi(a_i) - logprob_old_i). `advantages[g][i]` aligns
// with groups[g].samples[i].
struct SurrogateValue {
  double objective = 0.0;
  double kl = 0.0;
  std::vector<double> gradient;  // dJ/dlogits
};

SurrogateValue grpo_surrogate(std::span<const double> logits, std::span<const double> old_logits,
                              const std::vector<GroupBatch>& groups,
                              const std::vector<std::vector<double>>& advantages, double clip_eps,
                              double kl_coeff);

struct StepStats {
  int step = 0;
  double mean_reward = 0.0;
  double mean_abs_advantage = 0.0;
  double kl = 0.0;
  double lr = 0.0;
  double objective = 0.0;
  double grad_norm = 0.0;
  std::size_t groups = 0;
  std::size_t samples = 0;
  std::size_t excluded = 0;  // samples dropped before the update
};

void to_json(nlohmann::json& j, const StepStats& s);

struct StepResult {
  AuditorPolicy policy;
  StepStats stats;
};

// One gradient-ascent update. The KL anchor is the pre-step policy. Throws
// NonFiniteGradient (input policy untouched) if the gradient is not finite.
StepResult grpo_step(const AuditorPolicy& policy, const std::vector<GroupBatch>& groups,
                     const TrainSchedule& schedule, int step_idx);

}  // namespace audit
