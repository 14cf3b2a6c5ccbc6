#include "refrec/clients.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "refrec/errors.hpp"

namespace refrec {

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + " is not valid JSON: " + e.what());
  }
}

std::string string_field(const nlohmann::json& j, const char* field) {
  if (!j.contains(field) || !j.at(field).is_string()) return {};
  return j.at(field).get<std::string>();
}

std::shared_ptr<ModelClient> make_client(ClientRole role, const nlohmann::json& spec,
                                         const std::filesystem::path& base) {
  const std::string role_name(to_string(role));
  if (!spec.is_object()) throw SchemaError("client '" + role_name + "' must be an object", role_name);
  const std::string type = string_field(spec, "type");
  if (type == "scripted") {
    const std::string script = string_field(spec, "script");
    if (script.empty()) throw SchemaError("scripted client '" + role_name + "' needs 'script'", role_name + ".script");
    return ScriptedClient::from_file(role, base / script);
  }
  if (type == "http") {
    const std::string url = string_field(spec, "url");
    if (url.empty()) throw SchemaError("http client '" + role_name + "' needs 'url'", role_name + ".url");
    const int timeout_ms = spec.value("timeout_ms", 30000);
    return std::make_shared<HttpClient>(url, std::chrono::milliseconds(timeout_ms));
  }
  throw SchemaError("client '" + role_name + "' has unknown type '" + type + "'", role_name + ".type");
}

}  // namespace

std::string_view to_string(ClientRole role) noexcept {
  switch (role) {
    case ClientRole::kParser: return "parser";
    case ClientRole::kGrounder: return "grounder";
    case ClientRole::kVerifier: return "verifier";
    case ClientRole::kGenerator: return "generator";
  }
  return "unknown";
}

ClientRole parse_client_role(std::string_view name) {
  for (ClientRole r : {ClientRole::kParser, ClientRole::kGrounder, ClientRole::kVerifier, ClientRole::kGenerator}) {
    if (name == to_string(r)) return r;
  }
  throw InvalidInput("unknown client role '" + std::string(name) + "'");
}

nlohmann::json ClientRequest::to_json() const {
  return {{"role", std::string(to_string(role))}, {"image_ref", image_ref}, {"payload", payload}};
}

ScriptedClient::ScriptedClient(ClientRole role, nlohmann::json script) : role_(role), script_(std::move(script)) {
  if (!script_.is_object()) throw SchemaError("mock script section must be an object", std::string(to_string(role)));
}

std::shared_ptr<ScriptedClient> ScriptedClient::from_file(ClientRole role, const std::filesystem::path& path) {
  const nlohmann::json doc = read_json(path);
  const std::string section(to_string(role));
  if (!doc.is_object() || !doc.contains(section)) {
    throw SchemaError("mock script " + path.string() + " has no '" + section + "' section", section);
  }
  return std::make_shared<ScriptedClient>(role, doc.at(section));
}

std::string ScriptedClient::key_for(const ClientRequest& request) {
  const nlohmann::json& p = request.payload;
  switch (request.role) {
    case ClientRole::kParser:
      return request.image_ref;
    case ClientRole::kGrounder:
      return request.image_ref + "|" + string_field(p, "phrase");
    case ClientRole::kVerifier:
      if (string_field(p, "task") == "expression_consistency") {
        return request.image_ref + "|consistency|" + string_field(p, "expression");
      }
      return request.image_ref + "|checklist|" + string_field(p.value("checklist", nlohmann::json::object()), "description");
    case ClientRole::kGenerator:
      return request.image_ref + "|" + string_field(p.value("object", nlohmann::json::object()), "description") + "|" +
             string_field(p, "task");
  }
  return {};
}

nlohmann::json ScriptedClient::call(const ClientRequest& request) {
  if (request.role != role_) {
    throw ClientError("scripted " + std::string(to_string(role_)) + " client received a " +
                      std::string(to_string(request.role)) + " request");
  }
  const std::string key = key_for(request);
  std::string matched;
  for (const std::string& candidate : {key, request.image_ref + "|*", std::string("*")}) {
    if (script_.contains(candidate)) {
      matched = candidate;
      break;
    }
  }
  nlohmann::json response;
  {
    std::lock_guard lock(mu_);
    ++calls_;
    if (matched.empty()) {
      throw ClientError("mock " + std::string(to_string(role_)) + " has no script entry for '" + key + "'");
    }
    const nlohmann::json& entry = script_.at(matched);
    if (entry.is_array()) {
      if (entry.empty()) throw ClientError("mock script entry '" + matched + "' is empty");
      std::size_t& pos = cursor_[key];
      response = entry.at(std::min(pos, entry.size() - 1));
      ++pos;
    } else {
      response = entry;
    }
  }
  if (response.is_object() && response.contains("$error")) {
    throw ClientError("mock " + std::string(to_string(role_)) + " failure: " + response.at("$error").dump());
  }
  return response;
}

int ScriptedClient::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

HttpClient::HttpClient(std::string url, std::chrono::milliseconds timeout) : timeout_(timeout) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidInput("client url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

nlohmann::json HttpClient::call(const ClientRequest& request) {
  httplib::Client cli(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  auto res = cli.Post(path_, request.to_json().dump(), "application/json");
  if (!res) {
    throw ClientError(std::string(to_string(request.role)) + " request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw ClientError(std::string(to_string(request.role)) + " request returned HTTP " + std::to_string(res->status));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string(to_string(request.role)) + " response is not JSON: " + e.what(), "body");
  }
}

ModelClient& ClientSuite::get(ClientRole role) const {
  const std::shared_ptr<ModelClient>* slot = nullptr;
  switch (role) {
    case ClientRole::kParser: slot = &parser; break;
    case ClientRole::kGrounder: slot = &grounder; break;
    case ClientRole::kVerifier: slot = &verifier; break;
    case ClientRole::kGenerator: slot = &generator; break;
  }
  if (slot == nullptr || !*slot) throw InvalidInput("client suite has no " + std::string(to_string(role)) + " client");
  return **slot;
}

ClientsConfig load_clients_config(const std::filesystem::path& path) {
  const nlohmann::json doc = read_json(path);
  if (!doc.is_object()) throw SchemaError("clients config must be a JSON object");
  const std::filesystem::path base = path.parent_path();
  ClientsConfig cfg;
  for (ClientRole r : {ClientRole::kParser, ClientRole::kGrounder, ClientRole::kVerifier, ClientRole::kGenerator}) {
    const std::string name(to_string(r));
    if (!doc.contains(name)) throw SchemaError("clients config is missing '" + name + "'", name);
    auto client = make_client(r, doc.at(name), base);
    switch (r) {
      case ClientRole::kParser: cfg.suite.parser = client; break;
      case ClientRole::kGrounder: cfg.suite.grounder = client; break;
      case ClientRole::kVerifier: cfg.suite.verifier = client; break;
      case ClientRole::kGenerator: cfg.suite.generator = client; break;
    }
  }
  if (doc.contains("prompts")) {
    const nlohmann::json& p = doc.at("prompts");
    if (!p.is_object()) throw SchemaError("'prompts' must be an object", "prompts");
    if (p.contains("parser")) {
      if (!p.at("parser").is_string()) throw SchemaError("'prompts.parser' must be a path", "prompts.parser");
      cfg.prompts.parser = read_text(base / p.at("parser").get<std::string>());
    }
    if (p.contains("generator")) {
      if (!p.at("generator").is_object()) throw SchemaError("'prompts.generator' must map task to path", "prompts.generator");
      for (const auto& [task, file] : p.at("generator").items()) {
        if (!file.is_string()) throw SchemaError("prompt path must be a string", "prompts.generator." + task);
        cfg.prompts.generator[task] = read_text(base / file.get<std::string>());
      }
    }
  }
  return cfg;
}

RequestGate::RequestGate(int max_inflight) : capacity_(max_inflight), slots_(max_inflight) {
  if (max_inflight < 1 || max_inflight > 4096) throw InvalidInput("max_inflight must be in [1, 4096]");
}

void RequestGate::acquire() { slots_.acquire(); }
void RequestGate::release() { slots_.release(); }

CallResult call_with_retry(ModelClient& client, const ClientRequest& request, const RetryPolicy& policy,
                           RequestGate* gate) {
  if (policy.max_attempts < 1) throw InvalidInput("retry policy needs max_attempts >= 1");
  std::string last_error;
  auto delay = policy.base_delay;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    try {
      if (gate) gate->acquire();
      struct Release {
        RequestGate* g;
        ~Release() {
          if (g) g->release();
        }
      } release{gate};
      return CallResult{client.call(request), attempt};
    } catch (const ClientError& e) {
      last_error = e.what();
    }
    if (attempt < policy.max_attempts && delay.count() > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  throw RetriesExhausted(std::string(to_string(request.role)) + " failed after " +
                             std::to_string(policy.max_attempts) + " attempts: " + last_error,
                         policy.max_attempts);
}

}  // namespace refrec
