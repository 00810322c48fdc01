#include "audit/gateway.hpp"

#include <algorithm>
#include <thread>

#include "audit/error.hpp"
#include "audit/util.hpp"

namespace audit {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::Auditor: return "auditor";
    case Role::Target: return "target";
    case Role::Reference: return "reference";
    case Role::ImageGen: return "image_gen";
    case Role::ImageEdit: return "image_edit";
    case Role::Judge: return "judge";
    case Role::Summarizer: return "summarizer";
  }
  return "target";
}

Role role_from_string(std::string_view s) {
  for (Role r : {Role::Auditor, Role::Target, Role::Reference, Role::ImageGen, Role::ImageEdit,
                 Role::Judge, Role::Summarizer})
    if (to_string(r) == s) return r;
  throw Error(ErrorCode::ConfigError, "unknown role '" + std::string(s) + "'");
}

std::string_view to_string(BackendKind k) { return k == BackendKind::Mock ? "mock" : "remote"; }

BackendKind backend_kind_from_string(std::string_view s) {
  if (s == "mock") return BackendKind::Mock;
  if (s == "remote") return BackendKind::Remote;
  throw Error(ErrorCode::ConfigError, "unknown backend kind '" + std::string(s) + "'");
}

SamplingParams default_sampling(Role role) {
  return {role == Role::Auditor ? 1.0 : 0.0, std::nullopt};
}

std::string Backend::chat(const ChatRequest&) {
  throw Error(ErrorCode::ProtocolError, "backend does not support chat");
}

ImageRef Backend::generate_image(const std::string&, std::uint64_t) {
  throw Error(ErrorCode::GenerationFailed, "backend does not support image generation");
}

ImageRef Backend::edit_image(const ImageRef&, const std::string&, std::uint64_t) {
  throw Error(ErrorCode::EditFailed, "backend does not support image editing");
}

// ---- TokenBucket ----

TokenBucket::TokenBucket(double rate_per_second)
    : rate_(rate_per_second),
      capacity_(std::max(1.0, rate_per_second)),
      tokens_(capacity_),
      last_(Clock::now()) {}

void TokenBucket::acquire() {
  if (rate_ <= 0.0) return;
  for (;;) {
    std::chrono::duration<double> wait{};
    {
      std::lock_guard lock(mu_);
      const auto now = Clock::now();
      tokens_ = std::min(capacity_,
                         tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    }
    std::this_thread::sleep_for(wait);
  }
}

// ---- Gateway ----

void Gateway::add(BackendHandle handle, std::shared_ptr<Backend> backend) {
  if (handle.id.empty()) throw Error(ErrorCode::ConfigError, "backend handle id is empty");
  if (slots_.count(handle.id))
    throw Error(ErrorCode::ConfigError, "duplicate backend handle '" + handle.id + "'");
  if (handle.max_parallel < 1)
    throw Error(ErrorCode::ConfigError, "max_parallel must be >= 1 for '" + handle.id + "'");
  if (handle.retry.max_attempts < 1)
    throw Error(ErrorCode::ConfigError, "retry.max_attempts must be >= 1 for '" + handle.id + "'");
  if (!backend) throw Error(ErrorCode::ConfigError, "null backend for '" + handle.id + "'");
  Slot s;
  s.admission = std::make_unique<std::counting_semaphore<>>(handle.max_parallel);
  s.bucket = std::make_unique<TokenBucket>(handle.rate_limit);
  s.handle = std::move(handle);
  s.backend = std::move(backend);
  const std::string id = s.handle.id;
  slots_.emplace(id, std::move(s));
}

const BackendHandle& Gateway::handle(const std::string& id) const {
  auto it = slots_.find(id);
  if (it == slots_.end()) throw Error(ErrorCode::ConfigError, "unknown backend handle '" + id + "'");
  return it->second.handle;
}

Gateway::Slot& Gateway::slot(const std::string& id) {
  auto it = slots_.find(id);
  if (it == slots_.end()) throw Error(ErrorCode::ConfigError, "unknown backend handle '" + id + "'");
  return it->second;
}

std::vector<std::string> Gateway::handles_with_role(Role role) const {
  std::vector<std::string> out;
  for (const auto& [id, s] : slots_)
    if (s.handle.role == role) out.push_back(id);
  return out;
}

std::vector<std::string> Gateway::handle_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, s] : slots_) out.push_back(id);
  return out;
}

void Gateway::register_source(const ImageRef& image) {
  if (image.origin != ImageOrigin::Source || !image.well_formed())
    throw Error(ErrorCode::ImageUnresolvable, "not a well-formed source image: '" + image.uri + "'");
  images_.put(image);
}

ImageRef Gateway::resolve(const ImageRef& image, BackendKind kind) const {
  if (image.uri.empty() && !image.scene)
    throw Error(ErrorCode::ImageUnresolvable, "image has neither uri nor content");
  ImageRef out = image;
  if (kind == BackendKind::Mock && !out.scene) {
    auto known = images_.get(image.uri);
    if (!known || !known->scene)
      throw Error(ErrorCode::ImageUnresolvable, "no scene content for '" + image.uri + "'");
    out.scene = known->scene;
  }
  if (kind == BackendKind::Remote && out.uri.empty())
    throw Error(ErrorCode::ImageUnresolvable, "remote backends need an image uri");
  return out;
}

template <typename F>
auto Gateway::call_with_retry(Slot& s, F&& fn, int* attempts) -> decltype(fn()) {
  const RetryPolicy& rp = s.handle.retry;
  for (int attempt = 1;; ++attempt) {
    *attempts = attempt;
    std::string failure;
    {
      s.bucket->acquire();
      s.admission->acquire();
      struct Release {
        std::counting_semaphore<>* sem;
        ~Release() { sem->release(); }
      } release{s.admission.get()};
      try {
        return fn();
      } catch (const TransientError& e) {
        failure = e.what();
      }
    }
    if (attempt >= rp.max_attempts)
      throw Error(ErrorCode::BackendUnavailable,
                  "'" + s.handle.id + "' failed after " + std::to_string(attempt) +
                      " attempts: " + failure);
    const long backoff = static_cast<long>(rp.base_backoff_ms) << std::min(attempt - 1, 16);
    std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
  }
}

ChatResponse Gateway::chat(const std::string& handle_id, const ChatRequest& request) {
  Slot& s = slot(handle_id);
  switch (s.handle.role) {
    case Role::Auditor:
    case Role::Target:
    case Role::Reference:
    case Role::Judge:
    case Role::Summarizer:
      break;
    default:
      throw Error(ErrorCode::ProtocolError,
                  "chat is not available on " + std::string(to_string(s.handle.role)) + " handle '" +
                      handle_id + "'");
  }
  if (trim(request.text).empty() && request.images.empty())
    throw Error(ErrorCode::ProtocolError, "empty chat request");

  ChatRequest resolved = request;
  for (auto& img : resolved.images) img = resolve(img, s.handle.kind);

  ChatResponse response;
  const auto start = std::chrono::steady_clock::now();
  response.text =
      call_with_retry(s, [&] { return s.backend->chat(resolved); }, &response.attempt_count);
  response.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return response;
}

ImageRef Gateway::generate_image(const std::string& handle_id, const std::string& caption,
                                 std::uint64_t seed) {
  Slot& s = slot(handle_id);
  if (s.handle.role != Role::ImageGen)
    throw Error(ErrorCode::ProtocolError, "'" + handle_id + "' is not an image_gen handle");
  if (trim(caption).empty()) throw Error(ErrorCode::GenerationFailed, "empty caption");
  int attempts = 0;
  ImageRef out = call_with_retry(s, [&] { return s.backend->generate_image(caption, seed); },
                                 &attempts);
  out.origin = ImageOrigin::Generated;
  out.parent.reset();
  if (!out.well_formed())
    throw Error(ErrorCode::GenerationFailed, "backend returned a malformed image reference");
  images_.put(out);
  return out;
}

ImageRef Gateway::edit_image(const std::string& handle_id, const ImageRef& image,
                             const std::string& command, std::uint64_t seed) {
  Slot& s = slot(handle_id);
  if (s.handle.role != Role::ImageEdit)
    throw Error(ErrorCode::ProtocolError, "'" + handle_id + "' is not an image_edit handle");
  if (trim(command).empty()) throw Error(ErrorCode::EditUnparseable, "empty edit command");
  const ImageRef input = resolve(image, s.handle.kind);
  if (!images_.contains(input.uri)) images_.put(input);
  int attempts = 0;
  ImageRef out =
      call_with_retry(s, [&] { return s.backend->edit_image(input, command, seed); }, &attempts);
  out.origin = ImageOrigin::Edited;
  out.parent = input.uri;
  if (!out.well_formed() || out.uri == input.uri)
    throw Error(ErrorCode::EditFailed, "backend returned a malformed image reference");
  images_.put(out);
  return out;
}

}  // namespace audit
