#pragma once

#include <cstdlib>
#include <stdexcept>
#include <string>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "qcluster/agent.hpp"

namespace qcluster::agent {

struct RemoteConfig {
    std::string endpoint;        // http://host:port/path
    std::string model;           // echoed in the request body
    std::string credential_env;  // name of the env var holding the bearer token
    int retries = 2;             // attempts = retries + 1
    int timeout_seconds = 30;
};

// Single-request HTTP backend: POST {"model", "context"} as JSON, response
// body returned verbatim. Transport failures are retried then surfaced with
// the endpoint named.
class RemoteBackend final : public TextBackend {
  public:
    explicit RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
        parse_endpoint();
        if (!config_.credential_env.empty()) {
            const char* value = std::getenv(config_.credential_env.c_str());
            if (value == nullptr || *value == '\0')
                throw std::runtime_error("remote backend: credential environment variable '" +
                                         config_.credential_env + "' is not set");
            credential_ = value;
        }
    }

    std::string name() const override { return "remote"; }

    std::string generate(const json& context) override {
        const json body{{"model", config_.model}, {"context", context}};
        const std::string payload = body.dump();
        std::string last_error;
        for (int attempt = 0; attempt <= config_.retries; ++attempt) {
            httplib::Client client(host_);
            client.set_connection_timeout(config_.timeout_seconds);
            client.set_read_timeout(config_.timeout_seconds);
            httplib::Headers headers;
            if (!credential_.empty()) headers.emplace("Authorization", "Bearer " + credential_);
            auto response = client.Post(path_, headers, payload, "application/json");
            if (!response) {
                last_error = "transport error (" + httplib::to_string(response.error()) + ")";
                continue;
            }
            if (response->status < 200 || response->status >= 300) {
                last_error = "HTTP status " + std::to_string(response->status);
                continue;
            }
            return response->body;
        }
        throw std::runtime_error("remote backend: request to " + config_.endpoint + " failed after " +
                                 std::to_string(config_.retries + 1) + " attempt(s): " + last_error);
    }

  private:
    void parse_endpoint() {
        const auto& url = config_.endpoint;
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos)
            throw std::invalid_argument("remote backend: endpoint '" + url + "' has no scheme");
        const std::string scheme = url.substr(0, scheme_end);
        if (scheme == "https")
            throw std::invalid_argument("remote backend: https endpoints are not supported by this build");
        if (scheme != "http")
            throw std::invalid_argument("remote backend: unsupported scheme '" + scheme + "'");
        const auto path_start = url.find('/', scheme_end + 3);
        host_ = url.substr(0, path_start == std::string::npos ? url.size() : path_start);
        path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
    }

    RemoteConfig config_;
    std::string host_;  // scheme://host:port
    std::string path_;
    std::string credential_;
};

}  // namespace qcluster::agent
