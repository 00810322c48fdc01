#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "audit/image.hpp"

namespace audit {

enum class Role { Auditor, Target, Reference, ImageGen, ImageEdit, Judge, Summarizer };
enum class BackendKind { Remote, Mock };

std::string_view to_string(Role r);
Role role_from_string(std::string_view s);
std::string_view to_string(BackendKind k);
BackendKind backend_kind_from_string(std::string_view s);

struct RetryPolicy {
  int max_attempts = 3;
  int base_backoff_ms = 100;
};

struct BackendHandle {
  std::string id;
  Role role = Role::Target;
  BackendKind kind = BackendKind::Mock;
  std::string endpoint;  // remote only
  std::string model_name;
  int max_parallel = 4;
  double rate_limit = 0.0;  // requests/second, 0 = unlimited
  RetryPolicy retry;
  std::string bearer_token;  // passed through as Authorization header
};

struct SamplingParams {
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;
};

// Sampling defaults per role: exploratory for the auditor, greedy for
// everything that answers or judges.
SamplingParams default_sampling(Role role);

enum class AuditorTask { Caption, Edit, Question };

struct ChatRequest {
  std::string text;
  std::vector<ImageRef> images;
  SamplingParams sampling;
  // Hints consumed by in-process mock auditors only; never sent to remote
  // endpoints, which work from the free-form prompt text.
  std::optional<AuditorTask> task;
  std::optional<int> template_idx;
};

struct ChatResponse {
  std::string text;
  double latency_ms = 0.0;
  int attempt_count = 0;
};

// A model behind one handle. Implementations throw TransientError for
// retryable failures and Error for everything else.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string chat(const ChatRequest& request);
  virtual ImageRef generate_image(const std::string& caption, std::uint64_t seed);
  virtual ImageRef edit_image(const ImageRef& image, const std::string& command,
                              std::uint64_t seed);
};

}  // namespace audit
