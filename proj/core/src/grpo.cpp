#include "audit/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "audit/error.hpp"

namespace audit {

std::vector<double> masked_log_softmax(std::span<const double> logits, const std::vector<bool>& mask) {
  if (!mask.empty() && mask.size() != logits.size())
    throw Error(ErrorCode::ProtocolError, "mask size does not match policy size");
  auto allowed = [&](std::size_t i) { return mask.empty() || mask[i]; };
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (allowed(i)) hi = std::max(hi, logits[i]);
  if (!std::isfinite(hi)) throw Error(ErrorCode::ProtocolError, "no strategy is allowed in this context");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (allowed(i)) sum += std::exp(logits[i] - hi);
  const double lse = hi + std::log(sum);
  std::vector<double> out(logits.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (allowed(i)) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> AuditorPolicy::log_probabilities(const std::vector<bool>& mask) const {
  return masked_log_softmax(logits, mask);
}

std::vector<double> AuditorPolicy::probabilities(const std::vector<bool>& mask) const {
  auto lp = log_probabilities(mask);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

bool AuditorPolicy::finite() const {
  return std::all_of(logits.begin(), logits.end(), [](double v) { return std::isfinite(v); });
}

std::vector<double> GroupBatch::rewards() const {
  std::vector<double> r;
  r.reserve(samples.size());
  for (const auto& s : samples) r.push_back(s.reward);
  return r;
}

AdvantageBatch compute_advantages(std::span<const double> rewards, double epsilon) {
  if (rewards.size() < 2)
    throw Error(ErrorCode::GroupTooSmall, "a group needs at least two samples");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::ProtocolError, "epsilon must be positive");
  AdvantageBatch out;
  out.advantages.assign(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) return out;
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;

  const double denom = std::sqrt(var) + epsilon;
  for (std::size_t i = 0; i < rewards.size(); ++i) out.advantages[i] = (rewards[i] - mean) / denom;
  return out;
}

int TrainSchedule::warmup_steps() const {
  return static_cast<int>(std::lround(warmup_fraction * total_steps));
}

void TrainSchedule::validate() const {
  if (total_steps < 1) throw Error(ErrorCode::ConfigError, "total_steps must be >= 1");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0))
    throw Error(ErrorCode::ConfigError, "warmup_fraction must lie in (0, 1)");
  if (!(lr_init > 0.0) || lr_final < 0.0 || lr_final > lr_init)
    throw Error(ErrorCode::ConfigError, "need 0 <= lr_final <= lr_init and lr_init > 0");
  if (batch_size_groups < 1) throw Error(ErrorCode::ConfigError, "batch_size_groups must be >= 1");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw Error(ErrorCode::ConfigError, "clip_eps must lie in (0, 1)");
  if (kl_coeff < 0.0) throw Error(ErrorCode::ConfigError, "kl_coeff must be >= 0");
  if (checkpoint_every < 1) throw Error(ErrorCode::ConfigError, "checkpoint_every must be >= 1");
}

void to_json(nlohmann::json& j, const TrainSchedule& s) {
  j = {{"total_steps", s.total_steps},       {"warmup_fraction", s.warmup_fraction},
       {"lr_init", s.lr_init},               {"lr_final", s.lr_final},
       {"batch_size_groups", s.batch_size_groups}, {"clip_eps", s.clip_eps},
       {"kl_coeff", s.kl_coeff},             {"checkpoint_every", s.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainSchedule& s) {
  TrainSchedule d;
  s.total_steps = j.value("total_steps", d.total_steps);
  s.warmup_fraction = j.value("warmup_fraction", d.warmup_fraction);
  s.lr_init = j.value("lr_init", d.lr_init);
  s.lr_final = j.value("lr_final", d.lr_final);
  s.batch_size_groups = j.value("batch_size_groups", d.batch_size_groups);
  s.clip_eps = j.value("clip_eps", d.clip_eps);
  s.kl_coeff = j.value("kl_coeff", d.kl_coeff);
  s.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
}

double lr_at(int step, const TrainSchedule& s) {
  if (step < 0 || step > s.total_steps)
    throw Error(ErrorCode::StepOutOfRange,
                "step " + std::to_string(step) + " outside [0, " + std::to_string(s.total_steps) + "]");
  const int warmup = s.warmup_steps();
  if (step <= warmup) return warmup == 0 ? s.lr_init : s.lr_init * step / warmup;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(s.total_steps - warmup);
  const double c = std::cos(std::numbers::pi * progress);
  return s.lr_final + (s.lr_init - s.lr_final) * (1.0 + c) / 2.0;
}

bool is_checkpoint_step(int step, const TrainSchedule& s) {
  return step > 0 && (step % s.checkpoint_every == 0 || step == s.total_steps);
}

std::vector<int> checkpoint_steps(const TrainSchedule& s) {
  std::vector<int> out;
  for (int step = s.checkpoint_every; step < s.total_steps; step += s.checkpoint_every) out.push_back(step);
  out.push_back(s.total_steps);
  return out;
}

SurrogateValue grpo_surrogate(std::span<const double> logits, std::span<const double> old_logits,
                              const std::vector<GroupBatch>& groups,
                              const std::vector<std::vector<double>>& advantages, double clip_eps,
                              double kl_coeff) {
  if (logits.size() != old_logits.size())
    throw Error(ErrorCode::ProtocolError, "policy and anchor sizes differ");
  if (advantages.size() != groups.size())
    throw Error(ErrorCode::ProtocolError, "advantages do not align with groups");

  SurrogateValue out;
  out.gradient.assign(logits.size(), 0.0);
  std::size_t n_samples = 0;
  for (const auto& g : groups) n_samples += g.samples.size();
  if (n_samples == 0 || groups.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(n_samples);
  const double inv_g = 1.0 / static_cast<double>(groups.size());

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const GroupBatch& g = groups[gi];
    if (advantages[gi].size() != g.samples.size())
      throw Error(ErrorCode::ProtocolError, "advantages do not align with samples");
    const auto logp = masked_log_softmax(logits, g.mask);
    const auto logp_old = masked_log_softmax(old_logits, g.mask);
    std::vector<double> p(logp.size());
    for (std::size_t k = 0; k < logp.size(); ++k) p[k] = std::exp(logp[k]);

    for (std::size_t i = 0; i < g.samples.size(); ++i) {
      const GroupSample& s = g.samples[i];
      const double adv = advantages[gi][i];
      const double rho = std::exp(logp.at(s.strategy) - s.logprob_old);
      const double unclipped = rho * adv;
      const double clipped = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps) * adv;
      out.objective += std::min(unclipped, clipped) * inv_n;
      if (unclipped <= clipped) {
        // d rho / d z = rho * (e_a - p)
        const double w = adv * rho * inv_n;
        for (std::size_t k = 0; k < p.size(); ++k) out.gradient[k] -= w * p[k];
        out.gradient[s.strategy] += w;
      }
    }

    double kl = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k)
      if (p[k] > 0.0) kl += p[k] * (logp[k] - logp_old[k]);
    out.kl += kl * inv_g;
    out.objective -= kl_coeff * kl * inv_g;
    // d KL / d z_m = p_m (log p_m - log p_old_m - KL)
    for (std::size_t k = 0; k < p.size(); ++k)
      if (p[k] > 0.0) out.gradient[k] -= kl_coeff * inv_g * p[k] * (logp[k] - logp_old[k] - kl);
  }
  return out;
}

void to_json(nlohmann::json& j, const StepStats& s) {
  j = {{"step", s.step},           {"mean_reward", s.mean_reward}, {"mean_abs_advantage", s.mean_abs_advantage},
       {"kl", s.kl},               {"lr", s.lr},                   {"objective", s.objective},
       {"grad_norm", s.grad_norm}, {"groups", s.groups},           {"samples", s.samples},
       {"excluded", s.excluded}};
}

StepResult grpo_step(const AuditorPolicy& policy, const std::vector<GroupBatch>& groups,
                     const TrainSchedule& schedule, int step_idx) {
  if (groups.empty()) throw Error(ErrorCode::GroupTooSmall, "no groups in step");
  std::vector<std::vector<double>> advantages;
  StepStats stats;
  stats.step = step_idx;
  stats.lr = lr_at(step_idx, schedule);
  stats.groups = groups.size();
  double abs_adv = 0.0;
  double reward = 0.0;
  for (const auto& g : groups) {
    const auto r = g.rewards();
    advantages.push_back(compute_advantages(r, g.epsilon).advantages);
    for (double v : r) reward += v;
    for (double a : advantages.back()) abs_adv += std::abs(a);
    stats.samples += r.size();
  }
  stats.mean_reward = reward / static_cast<double>(stats.samples);
  stats.mean_abs_advantage = abs_adv / static_cast<double>(stats.samples);

  const auto value = grpo_surrogate(policy.logits, policy.logits, groups, advantages, schedule.clip_eps,
                                    schedule.kl_coeff);
  double norm2 = 0.0;
  for (double g : value.gradient) {
    if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "gradient has non-finite entries");
    norm2 += g * g;
  }
  stats.kl = value.kl;
  stats.objective = value.objective;
  stats.grad_norm = std::sqrt(norm2);

  StepResult out{policy, stats};
  for (std::size_t k = 0; k < out.policy.logits.size(); ++k) out.policy.logits[k] += stats.lr * value.gradient[k];
  ++out.policy.version;
  return out;
}

}  // namespace audit
