#pragma once

// JSON-over-HTTP POST with timeouts and retries, shared by remote backends.

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <stdexcept>
#include <string>

namespace gesturegen::util {

class RemoteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RemoteSettings {
  std::string url;  // e.g. http://localhost:8080
  double timeout_seconds = 10;
  int retries = 2;
};

/// Returns the parsed body of the first 200 response; any other outcome is
/// retried `retries` times and then reported as RemoteError.
inline nlohmann::json post_json(const RemoteSettings& cfg, const std::string& path, const nlohmann::json& body) {
  if (cfg.url.empty()) throw RemoteError("remote backend URL is not set");
  httplib::Client client(cfg.url);
  const auto secs = static_cast<time_t>(cfg.timeout_seconds);
  const auto usecs = static_cast<time_t>((cfg.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= std::max(cfg.retries, 0); ++attempt) {
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("malformed response: ") + e.what();
    }
  }
  throw RemoteError(cfg.url + path + ": " + last_error);
}

}  // namespace gesturegen::util
