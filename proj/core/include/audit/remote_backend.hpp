#pragma once

#include <string>

#include <json.hpp>

#include "audit/backend.hpp"

namespace audit {

// HTTP JSON backend.
//   chat:  {model, messages:[{role, content:[{type:"text",text}|{type:"image",uri}]}],
//           temperature, seed} -> {text}
//   image generation: {prompt, seed} -> {uri}
//   image editing:    {image_uri, instruction, seed} -> {uri}
// Connection failures and 5xx are TransientError; other statuses and
// malformed bodies are ProtocolError.
class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(BackendHandle handle);

  std::string chat(const ChatRequest& request) override;
  ImageRef generate_image(const std::string& caption, std::uint64_t seed) override;
  ImageRef edit_image(const ImageRef& image, const std::string& command,
                      std::uint64_t seed) override;

  nlohmann::json chat_body(const ChatRequest& request) const;

 private:
  nlohmann::json post(const nlohmann::json& body) const;

  BackendHandle handle_;
  std::string origin_;  // scheme://host:port
  std::string path_;
};

}  // namespace audit
