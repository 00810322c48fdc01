#include "audit/http_api.hpp"

#include <charconv>
#include <chrono>

#include <httplib.h>

#include "audit/error.hpp"

namespace audit {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kDefaultPageSize = 50;
constexpr std::size_t kMaxPageSize = 500;

using json = nlohmann::json;

ApiResponse error_response(int status, const std::string& code, const std::string& message) {
  return {status, {{"error", code}, {"message", message}}};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    std::size_t j = i;
    while (j < path.size() && path[j] != '/') ++j;
    if (j > i) parts.push_back(path.substr(i, j - i));
    i = j;
  }
  return parts;
}

std::optional<std::size_t> parse_size(const std::string& s) {
  std::size_t v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || s.empty()) return std::nullopt;
  return v;
}

json image_json(const ImageRef& ref) {
  json j = {{"uri", ref.uri}, {"width", ref.width}, {"height", ref.height}};
  json full = ref;
  j["origin"] = full.at("origin");
  j["parent"] = ref.parent ? json(*ref.parent) : json(nullptr);
  return j;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

struct HttpApi::Server {
  httplib::Server http;
};

HttpApi::HttpApi(Store& store, std::string token, std::function<std::int64_t()> clock)
    : store_(store), token_(std::move(token)), clock_(clock ? std::move(clock) : now_ms),
      server_(std::make_unique<Server>()) {}

HttpApi::~HttpApi() { stop(); }

ApiResponse HttpApi::handle(const ApiRequest& req) {
  const auto parts = split_path(req.path);
  if (parts.size() == 1 && parts[0] == "healthz") {
    if (req.method != "GET") return error_response(405, "method_not_allowed", req.method);
    return {200, {{"status", "ok"}}};
  }
  if (!token_.empty() && req.authorization != "Bearer " + token_)
    return error_response(401, "unauthorized", "missing or invalid bearer token");

  try {
    if (!parts.empty() && parts[0] == "runs") {
      if (req.method != "GET") return error_response(405, "method_not_allowed", req.method);
      if (parts.size() == 1) {
        json runs = json::array();
        for (const auto& id : store_.run_ids()) runs.push_back(store_.run(id)->summary());
        return {200, {{"runs", runs}}};
      }
      const std::string& run_id = parts[1];
      if (!store_.has_run(run_id)) return error_response(404, "not_found", "unknown run '" + run_id + "'");
      if (parts.size() == 2) return {200, store_.run(run_id)->summary()};
      if (parts.size() == 3 && parts[2] == "cases") return get_cases(run_id, req.query);
      if (parts.size() == 3 && parts[2] == "report") return {200, report_json(store_.run(run_id)->report())};
    } else if (parts.size() >= 2 && parts[0] == "cases") {
      if (parts.size() == 2) {
        if (req.method != "GET") return error_response(405, "method_not_allowed", req.method);
        return get_case(parts[1]);
      }
      if (parts.size() == 3 && parts[2] == "verdict") {
        if (req.method != "POST") return error_response(405, "method_not_allowed", req.method);
        return post_verdict(parts[1], req.body);
      }
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NotFound) return error_response(404, "not_found", e.what());
    return error_response(500, std::string(to_string(e.code())), e.what());
  }
  return error_response(404, "not_found", "no route for " + req.method + " " + req.path);
}

ApiResponse HttpApi::get_cases(const std::string& run_id, const std::map<std::string, std::string>& query) {
  std::optional<CaseStatus> status;
  std::size_t limit = kDefaultPageSize;
  std::size_t cursor = 0;
  if (auto it = query.find("status"); it != query.end() && !it->second.empty()) {
    if (it->second == "pending") status = CaseStatus::Pending;
    else if (it->second == "adjudicated") status = CaseStatus::Adjudicated;
    else return error_response(422, "invalid_status", "status must be pending or adjudicated");
  }
  if (auto it = query.find("limit"); it != query.end()) {
    auto v = parse_size(it->second);
    if (!v || *v == 0 || *v > kMaxPageSize)
      return error_response(422, "invalid_limit", "limit must be in 1.." + std::to_string(kMaxPageSize));
    limit = *v;
  }
  if (auto it = query.find("cursor"); it != query.end() && !it->second.empty()) {
    auto v = parse_size(it->second);
    if (!v) return error_response(422, "invalid_cursor", "cursor must be a non-negative integer");
    cursor = *v;
  }
  const auto page = store_.list_cases(run_id, status, limit, cursor);
  json cases = json::array();
  for (const auto& c : page.cases) cases.push_back(c);
  return {200,
          {{"cases", cases},
           {"next_cursor", page.has_more ? json(std::to_string(page.next_cursor)) : json(nullptr)},
           {"has_more", page.has_more}}};
}

ApiResponse HttpApi::get_case(const std::string& case_id) {
  const auto run_id = Store::run_of_case(case_id);
  if (!run_id || !store_.has_run(*run_id)) return error_response(404, "not_found", "unknown case '" + case_id + "'");
  const auto run = store_.run(*run_id);
  const FailureCase* c = run->find_case(case_id);
  if (!c) return error_response(404, "not_found", "unknown case '" + case_id + "'");
  json body = {{"case", *c}, {"run_id", *run_id}};
  const Exemplar* e = run->exemplar(c->exemplar_id);
  if (e) {
    body["exemplar"] = *e;
    json lineage = json::array({image_json(e->image)});
    if (e->image.parent) lineage.push_back({{"uri", *e->image.parent}, {"origin", "source"}, {"parent", nullptr}});
    body["lineage"] = lineage;
  }
  if (const DisagreementRecord* r = run->record(c->record_id)) body["record"] = *r;
  return {200, body};
}

ApiResponse HttpApi::post_verdict(const std::string& case_id, const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    return error_response(422, "invalid_body", "body must be a JSON object");
  }
  if (!j.is_object() || !j.contains("label") || !j["label"].is_string())
    return error_response(422, "invalid_label", "label is required");
  const auto label = verdict_label_from_string(j["label"].get<std::string>());
  if (!label)
    return error_response(422, "invalid_label", "label must be target_failure, ambiguous or unanswerable");
  std::string annotator = "anonymous";
  if (j.contains("annotator")) {
    if (!j["annotator"].is_string()) return error_response(422, "invalid_body", "annotator must be a string");
    annotator = j["annotator"].get<std::string>();
  }
  bool force = false;
  if (j.contains("force")) {
    if (!j["force"].is_boolean()) return error_response(422, "invalid_body", "force must be a boolean");
    force = j["force"].get<bool>();
  }
  const auto run_id = Store::run_of_case(case_id);
  if (!run_id || !store_.has_run(*run_id)) return error_response(404, "not_found", "unknown case '" + case_id + "'");

  const auto result = store_.set_verdict(case_id, *label, annotator, force, clock_());
  switch (result.outcome) {
    case Store::VerdictOutcome::NotFound:
      return error_response(404, "not_found", "unknown case '" + case_id + "'");
    case Store::VerdictOutcome::Conflict: {
      auto r = error_response(409, "conflict", "case already has a different verdict; resubmit with force");
      r.body["case"] = *result.state;
      return r;
    }
    case Store::VerdictOutcome::Unchanged:
      return {200, {{"case", *result.state}, {"changed", false}}};
    case Store::VerdictOutcome::Created:
      break;
  }
  return {200, {{"case", *result.state}, {"changed", true}}};
}

static void install_routes(httplib::Server& http, HttpApi& api) {
  auto dispatch = [&api](const httplib::Request& req, httplib::Response& res) {
    ApiRequest r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    r.body = req.body;
    r.authorization = req.get_header_value("Authorization");
    const auto out = api.handle(r);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  http.Get(R"(/.*)", dispatch);
  http.Post(R"(/.*)", dispatch);
  http.Put(R"(/.*)", dispatch);
  http.Delete(R"(/.*)", dispatch);
}

void HttpApi::mount_store() {
  // image files by URI path: /files/runs/{id}/images/...
  if (fs::is_directory(store_.root())) server_->http.set_mount_point("/files", store_.root().string());
}

bool HttpApi::serve(const std::string& host, int port) {
  install_routes(server_->http, *this);
  mount_store();
  return server_->http.listen(host, port);
}

int HttpApi::bind_any(const std::string& host) {
  install_routes(server_->http, *this);
  mount_store();
  return server_->http.bind_to_any_port(host);
}

bool HttpApi::listen_after_bind() { return server_->http.listen_after_bind(); }

void HttpApi::stop() {
  server_->http.stop();
}

std::pair<std::string, int> parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos || colon == 0)
    throw Error(ErrorCode::ConfigError, "bind address must be host:port, got '" + bind + "'");
  int port = 0;
  const std::string p = bind.substr(colon + 1);
  auto [end, ec] = std::from_chars(p.data(), p.data() + p.size(), port);
  if (ec != std::errc() || end != p.data() + p.size() || port < 0 || port > 65535)
    throw Error(ErrorCode::ConfigError, "invalid port in '" + bind + "'");
  return {bind.substr(0, colon), port};
}

}  // namespace audit
