#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace refrec {

enum class ClientRole { kParser, kGrounder, kVerifier, kGenerator };

std::string_view to_string(ClientRole role) noexcept;
ClientRole parse_client_role(std::string_view name);

/// Wire envelope shared by every role: {"role", "image_ref", "payload"}.
struct ClientRequest {
  ClientRole role = ClientRole::kParser;
  std::string image_ref;
  nlohmann::json payload = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// One failed call (transport error, timeout, non-200 status). Retriable.
class ClientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised once the retry budget is spent.
class RetriesExhausted : public ClientError {
 public:
  RetriesExhausted(const std::string& message, int attempts) : ClientError(message), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class ModelClient {
 public:
  virtual ~ModelClient() = default;
  /// Returns the response body. Throws ClientError on failure.
  virtual nlohmann::json call(const ClientRequest& request) = 0;
};

/// Replays responses from a script keyed per request:
///   parser    -> "<image_ref>"
///   grounder  -> "<image_ref>|<phrase>"
///   verifier  -> "<image_ref>|checklist|<description>" or "<image_ref>|consistency|<expression>"
///   generator -> "<image_ref>|<description>|<Task>"
/// Lookup falls back to "<image_ref>|*" then "*". A value that is an array is a
/// sequence consumed one element per call (the last element repeats). An
/// element {"$error": "..."} makes that call fail.
class ScriptedClient : public ModelClient {
 public:
  ScriptedClient(ClientRole role, nlohmann::json script);

  /// Reads the role's section from a script file holding all four roles.
  static std::shared_ptr<ScriptedClient> from_file(ClientRole role, const std::filesystem::path& path);

  nlohmann::json call(const ClientRequest& request) override;

  static std::string key_for(const ClientRequest& request);
  int calls() const;

 private:
  ClientRole role_;
  nlohmann::json script_;
  mutable std::mutex mu_;
  std::map<std::string, std::size_t> cursor_;
  int calls_ = 0;
};

/// POSTs the request envelope as JSON to `url` (http://host:port/path).
class HttpClient : public ModelClient {
 public:
  HttpClient(std::string url, std::chrono::milliseconds timeout);
  nlohmann::json call(const ClientRequest& request) override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

struct ClientSuite {
  std::shared_ptr<ModelClient> parser;
  std::shared_ptr<ModelClient> grounder;
  std::shared_ptr<ModelClient> verifier;
  std::shared_ptr<ModelClient> generator;

  ModelClient& get(ClientRole role) const;
};

/// Opaque prompt assets passed verbatim to the parser and generator clients.
struct PromptAssets {
  std::string parser;
  std::map<std::string, std::string> generator;  // keyed by task name
};

struct ClientsConfig {
  ClientSuite suite;
  PromptAssets prompts;
};

/// Clients config JSON:
///   {"parser": {"type": "scripted", "script": "mocks.json"} |
///              {"type": "http", "url": "http://127.0.0.1:8080/parse", "timeout_ms": 30000},
///    "grounder": {...}, "verifier": {...}, "generator": {...},
///    "prompts"?: {"parser": "prompts/parse.txt", "generator": {"Attribute": "prompts/attr.txt", ...}}}
/// Relative paths resolve against the config file's directory.
ClientsConfig load_clients_config(const std::filesystem::path& path);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{100};  // doubles after each failure
};

/// Caps concurrent external requests.
class RequestGate {
 public:
  explicit RequestGate(int max_inflight);
  void acquire();
  void release();
  int capacity() const noexcept { return capacity_; }

 private:
  int capacity_;
  std::counting_semaphore<4096> slots_;
};

struct CallResult {
  nlohmann::json response;
  int attempts = 0;
};

/// Calls `client` with retries. Throws RetriesExhausted after the last failure.
CallResult call_with_retry(ModelClient& client, const ClientRequest& request, const RetryPolicy& policy,
                           RequestGate* gate = nullptr);

}  // namespace refrec
