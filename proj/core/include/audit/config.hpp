#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "audit/divergence.hpp"
#include "audit/exemplar.hpp"
#include "audit/gateway.hpp"
#include "audit/grpo.hpp"
#include "audit/mock_models.hpp"
#include "audit/strategy.hpp"

namespace audit {

struct BackendSpec {
  BackendHandle handle;
  std::string token_env;  // bearer token read from this variable at build time
  Weaknesses weaknesses;  // mock target/reference only
};

void to_json(nlohmann::json& j, const Weaknesses& w);
void from_json(const nlohmann::json& j, Weaknesses& w);

// Everything a run needs, in one declarative file. See README for the keys.
struct PipelineConfig {
  std::vector<BackendSpec> backends;
  std::string auditor;
  std::string image_gen;
  std::string image_edit;
  std::string target;
  std::vector<std::string> references;
  std::string summarizer;
  ConsensusPolicy consensus;
  std::optional<std::string> prompts_file;
  bool baseline_prompts = false;
  int templates = kProbeTemplateCount;
  EnabledPolicies enabled;
  bool preserve_positions = false;
  int filter_retries = 5;
  int group_size = 8;
  double epsilon = 1e-4;
  TrainSchedule schedule;
  std::uint64_t seed = 0;
  int workers = 1;
  bool remote_auditor = false;

  // Total check: roles, references, toggles, schedule. Touches nothing on
  // disk except the prompts file, which it reads. Throws ConfigError.
  void validate() const;
  // FNV-1a over the canonical JSON form.
  std::string hash() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
// Missing keys take defaults; unknown keys and wrong types are ConfigError.
PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

// All-mock world: a target with a counting weakness (cap 3), three faithful
// references, mock auditor, generator, editor, judge and summarizer.
PipelineConfig mock_config(std::uint64_t seed = 0);

// Live objects built from a validated config.
class Runtime {
 public:
  explicit Runtime(PipelineConfig config);

  PipelineConfig& config() { return config_; }
  const PipelineConfig& config() const { return config_; }
  Gateway& gateway() { return gateway_; }
  ExemplarGenerator& generator() { return *generator_; }
  Scorer& scorer() { return *scorer_; }
  const StrategySpace& space() const { return space_; }

 private:
  PipelineConfig config_;
  Gateway gateway_;
  StrategySpace space_;
  std::unique_ptr<ExemplarGenerator> generator_;
  std::unique_ptr<Scorer> scorer_;
};

std::shared_ptr<Backend> make_backend(const BackendSpec& spec);

}  // namespace audit
