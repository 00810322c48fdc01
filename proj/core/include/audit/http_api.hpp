#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>

#include <json.hpp>

#include "audit/store.hpp"

namespace audit {

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
  std::string authorization;  // raw Authorization header
};

// REST surface over a Store. `handle` is transport-free; `serve` binds it
// to HTTP.
//   GET  /healthz
//   GET  /runs
//   GET  /runs/{id}
//   GET  /runs/{id}/cases?status=pending&limit=N&cursor=C
//   GET  /runs/{id}/report
//   GET  /cases/{id}
//   POST /cases/{id}/verdict   {label, annotator, force}
class HttpApi {
 public:
  explicit HttpApi(Store& store, std::string token = {},
                   std::function<std::int64_t()> clock = {});
  ~HttpApi();

  ApiResponse handle(const ApiRequest& request);

  // Blocks until stop(). Returns false when the address cannot be bound.
  bool serve(const std::string& host, int port);
  // Binds to an ephemeral port; returns it, or -1.
  int bind_any(const std::string& host);
  bool listen_after_bind();
  void stop();

 private:
  ApiResponse get_cases(const std::string& run_id, const std::map<std::string, std::string>& query);
  ApiResponse get_case(const std::string& case_id);
  ApiResponse post_verdict(const std::string& case_id, const std::string& body);
  void mount_store();

  Store& store_;
  std::string token_;
  std::function<std::int64_t()> clock_;
  struct Server;
  std::unique_ptr<Server> server_;
};

// "host:port" split; throws ConfigError.
std::pair<std::string, int> parse_bind(const std::string& bind);

}  // namespace audit
