#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <vector>

#include "audit/backend.hpp"
#include "audit/image.hpp"

namespace audit {

// Token bucket; capacity is max(1, rate). A rate of 0 disables limiting.
class TokenBucket {
 public:
  explicit TokenBucket(double rate_per_second);
  void acquire();

 private:
  using Clock = std::chrono::steady_clock;
  double rate_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mu_;
};

// Uniform entry point for every model role. Handles are registered up front;
// after that the gateway is safe to share across worker threads. Each call
// blocks until the handle admits it (max_parallel in flight, token-bucket
// rate), then retries transient failures with exponential backoff.
class Gateway {
 public:
  Gateway() = default;
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void add(BackendHandle handle, std::shared_ptr<Backend> backend);

  const BackendHandle& handle(const std::string& id) const;
  bool has(const std::string& id) const { return slots_.count(id) > 0; }
  std::vector<std::string> handles_with_role(Role role) const;
  std::vector<std::string> handle_ids() const;

  ChatResponse chat(const std::string& handle_id, const ChatRequest& request);
  ImageRef generate_image(const std::string& handle_id, const std::string& caption,
                          std::uint64_t seed);
  ImageRef edit_image(const std::string& handle_id, const ImageRef& image,
                      const std::string& command, std::uint64_t seed);

  // Source images must be registered before they can be edited or queried.
  void register_source(const ImageRef& image);
  ImageStore& images() { return images_; }
  const ImageStore& images() const { return images_; }

 private:
  struct Slot {
    BackendHandle handle;
    std::shared_ptr<Backend> backend;
    std::unique_ptr<std::counting_semaphore<>> admission;
    std::unique_ptr<TokenBucket> bucket;
  };

  Slot& slot(const std::string& id);
  ImageRef resolve(const ImageRef& image, BackendKind kind) const;

  template <typename F>
  auto call_with_retry(Slot& s, F&& fn, int* attempts) -> decltype(fn());

  std::map<std::string, Slot> slots_;
  ImageStore images_;
};

}  // namespace audit
