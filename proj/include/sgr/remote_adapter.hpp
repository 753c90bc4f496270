#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "sgr/adapter.hpp"

namespace sgr {

// Remote language model over a JSON wire:
//   POST {request_id, kind, question, payload, template_version}
//   <-   {request_id, body}
// Endpoint and auth token come from SGR_LLM_ENDPOINT / SGR_LLM_TOKEN unless
// given explicitly.
class RemoteAdapter : public Adapter {
 public:
  struct Options {
    std::string endpoint;      // e.g. "http://host:port/path"
    std::string token;
    int timeout_seconds = 30;
    int retries = 2;
    std::chrono::milliseconds initial_backoff{250};
  };

  explicit RemoteAdapter(Options opts) : opts_(std::move(opts)) {
    if (opts_.endpoint.empty()) {
      if (const char* env = std::getenv("SGR_LLM_ENDPOINT"))
        opts_.endpoint = env;
    }
    if (opts_.token.empty()) {
      if (const char* env = std::getenv("SGR_LLM_TOKEN")) opts_.token = env;
    }
    if (opts_.endpoint.empty())
      throw AdapterError("no remote endpoint configured (SGR_LLM_ENDPOINT)");
    split_endpoint();
  }

  AdapterResponse complete(const AdapterRequest& request) override {
    nlohmann::json wire = {{"request_id", request.request_id},
                           {"kind", to_string(request.kind)},
                           {"question", request.question},
                           {"payload", request.payload},
                           {"template_version",
                            std::string(kPromptTemplateVersion)}};
    std::string body = wire.dump();

    std::string last_error;
    auto backoff = opts_.initial_backoff;
    for (int attempt = 0; attempt <= opts_.retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      httplib::Client client(host_);
      client.set_connection_timeout(opts_.timeout_seconds);
      client.set_read_timeout(opts_.timeout_seconds);
      httplib::Headers headers;
      if (!opts_.token.empty())
        headers.emplace("Authorization", "Bearer " + opts_.token);
      auto res = client.Post(path_, headers, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_error = "http status " + std::to_string(res->status);
        continue;
      }
      nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
      if (reply.is_discarded() || !reply.is_object() ||
          !reply.contains("request_id") || !reply.contains("body"))
        throw AdapterError("malformed remote reply", res->body);
      if (reply["request_id"].get<std::uint64_t>() != request.request_id)
        throw AdapterError("remote reply for wrong request_id", res->body);
      nlohmann::json response_body = reply["body"];
      detail::clamp_body(request.kind, response_body);
      return AdapterResponse{request.request_id, std::move(response_body)};
    }
    throw AdapterError("remote adapter failed after retries: " + last_error);
  }

 private:
  void split_endpoint() {
    // scheme://host[:port]/path
    auto scheme_end = opts_.endpoint.find("://");
    std::size_t host_start =
        scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = opts_.endpoint.find('/', host_start);
    if (path_start == std::string::npos) {
      host_ = opts_.endpoint;
      path_ = "/";
    } else {
      host_ = opts_.endpoint.substr(0, path_start);
      path_ = opts_.endpoint.substr(path_start);
    }
  }

  Options opts_;
  std::string host_;  // includes scheme and port
  std::string path_;
};

}  // namespace sgr
