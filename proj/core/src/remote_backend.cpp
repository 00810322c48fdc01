#include "audit/remote_backend.hpp"

#include <httplib.h>

#include "audit/error.hpp"

namespace audit {

namespace {

constexpr int kRemoteDefaultSize = 1024;

ImageRef image_from_reply(const nlohmann::json& reply) {
  if (!reply.is_object() || !reply.contains("uri") || !reply["uri"].is_string() ||
      reply["uri"].get<std::string>().empty())
    throw Error(ErrorCode::ProtocolError, "image reply lacks a uri");
  ImageRef out;
  out.uri = reply["uri"].get<std::string>();
  out.width = reply.value("width", kRemoteDefaultSize);
  out.height = reply.value("height", kRemoteDefaultSize);
  return out;
}

}  // namespace

RemoteBackend::RemoteBackend(BackendHandle handle) : handle_(std::move(handle)) {
  const auto scheme = handle_.endpoint.find("://");
  if (scheme == std::string::npos)
    throw Error(ErrorCode::ConfigError, "endpoint '" + handle_.endpoint + "' has no scheme");
  const auto slash = handle_.endpoint.find('/', scheme + 3);
  origin_ = handle_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : handle_.endpoint.substr(slash);
}

nlohmann::json RemoteBackend::post(const nlohmann::json& body) const {
  httplib::Client client(origin_);
  client.set_connection_timeout(10);
  client.set_read_timeout(300);
  httplib::Headers headers;
  if (!handle_.bearer_token.empty())
    headers.emplace("Authorization", "Bearer " + handle_.bearer_token);
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw TransientError("transport failure: " + httplib::to_string(res.error()));
  if (res->status >= 500) throw TransientError("server error " + std::to_string(res->status));
  if (res->status != 200)
    throw Error(ErrorCode::ProtocolError, "unexpected status " + std::to_string(res->status));
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::ProtocolError, "response is not JSON");
  }
}

nlohmann::json RemoteBackend::chat_body(const ChatRequest& request) const {
  auto content = nlohmann::json::array();
  if (!request.text.empty()) content.push_back({{"type", "text"}, {"text", request.text}});
  for (const auto& img : request.images) content.push_back({{"type", "image"}, {"uri", img.uri}});
  nlohmann::json body = {{"model", handle_.model_name},
                         {"messages", {{{"role", "user"}, {"content", content}}}},
                         {"temperature", request.sampling.temperature}};
  if (request.sampling.seed) body["seed"] = *request.sampling.seed;
  return body;
}

std::string RemoteBackend::chat(const ChatRequest& request) {
  auto reply = post(chat_body(request));
  if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string())
    throw Error(ErrorCode::ProtocolError, "chat reply lacks a text field");
  return reply["text"].get<std::string>();
}

ImageRef RemoteBackend::generate_image(const std::string& caption, std::uint64_t seed) {
  return image_from_reply(post({{"prompt", caption}, {"seed", seed}}));
}

ImageRef RemoteBackend::edit_image(const ImageRef& image, const std::string& command,
                                   std::uint64_t seed) {
  return image_from_reply(post({{"image_uri", image.uri}, {"instruction", command}, {"seed", seed}}));
}

}  // namespace audit
