#include "mlagent/http_backend.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "mlagent/errors.hpp"

namespace mlagent {

std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError(fmt::format("base URL '{}' has no scheme", base_url));
  const auto path_start = base_url.find('/', scheme_end + 3);
  std::string address = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {address, prefix};
}

namespace {

std::string read_key(const std::string& env) {
  if (env.empty()) return {};
  const char* v = std::getenv(env.c_str());
  return v ? std::string(v) : std::string();
}

void default_sleep(double s) {
  std::this_thread::sleep_for(std::chrono::duration<double>(s));
}

std::unique_ptr<httplib::Client> make_client(const std::string& address, double timeout_s) {
  auto client = std::make_unique<httplib::Client>(address);
  const auto secs = static_cast<time_t>(timeout_s);
  const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
  client->set_connection_timeout(secs, usecs);
  client->set_read_timeout(secs, usecs);
  client->set_write_timeout(secs, usecs);
  return client;
}

bool transient_status(int status) { return status == 429 || status == 408 || status >= 500; }

}  // namespace

HttpChatBackend::HttpChatBackend(HttpBackendConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleep_(sleeper ? std::move(sleeper) : Sleeper(default_sleep)) {
  std::tie(address_, prefix_) = split_base_url(config_.base_url);
  api_key_ = read_key(config_.api_key_env);
}

std::string HttpChatBackend::id() const { return "http:" + config_.base_url; }

PromptResponse HttpChatBackend::complete(const PromptRequest& request) {
  if (!is_known_step(request.step_name)) {
    throw InvalidArgument(fmt::format("unknown pipeline step '{}'", request.step_name));
  }
  const std::string& model =
      step_phase(request.step_name) == Phase::Development ? config_.development_model : config_.research_model;
  json body{{"model", model},
            {"messages", json::array({json{{"role", "user"}, {"content", request.rendered_prompt}}})},
            {"max_tokens", request.max_tokens}};
  if (config_.send_temperature) body["temperature"] = request.temperature;
  const std::string payload = body.dump();

  httplib::Headers headers{{"Idempotency-Key", request.idempotency_key}};
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto client = make_client(address_, config_.timeout_s);
  const auto started = std::chrono::steady_clock::now();
  double backoff = config_.backoff_initial_s;
  std::string last_error;
  int last_status = 0;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      ++retries_;
      sleep_(std::min(backoff, config_.backoff_max_s));
      backoff *= config_.backoff_multiplier;
    }
    auto res = client->Post(prefix_ + "/chat/completions", headers, payload, "application/json");
    if (!res) {
      last_status = 0;
      last_error = httplib::to_string(res.error());
      continue;
    }
    last_status = res->status;
    if (transient_status(res->status)) {
      last_error = fmt::format("HTTP {}", res->status);
      continue;
    }
    if (res->status != 200) {
      throw BackendError(fmt::format("HTTP {} from {}: {}", res->status, config_.base_url, res->body.substr(0, 512)));
    }
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::parse_error&) {
      throw BackendError("chat-completions reply is not JSON");
    }
    PromptResponse out;
    try {
      out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      throw BackendError("chat-completions reply has no message content");
    }
    if (reply.contains("usage") && reply["usage"].is_object()) {
      out.usage.prompt_tokens = reply["usage"].value("prompt_tokens", 0L);
      out.usage.completion_tokens = reply["usage"].value("completion_tokens", 0L);
    }
    out.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    out.backend_id = id();
    prompt_tokens_ += out.usage.prompt_tokens;
    completion_tokens_ += out.usage.completion_tokens;
    return out;
  }
  const std::string why = fmt::format("giving up after {} attempts: {}", config_.max_retries + 1, last_error);
  if (last_status == 429) throw RateLimited(why);
  if (last_status == 0 && last_error.find("Timeout") != std::string::npos) throw BackendTimeout(why);
  throw BackendError(why);
}

HttpEmbedder::HttpEmbedder(HttpBackendConfig config) : config_(std::move(config)) {
  std::tie(address_, prefix_) = split_base_url(config_.base_url);
  api_key_ = read_key(config_.api_key_env);
}

std::vector<double> HttpEmbedder::embed(std::string_view text) {
  if (text.empty()) throw EmptyText();
  json body{{"model", config_.embedding_model}, {"input", std::string(text)}};
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto client = make_client(address_, config_.timeout_s);
  double backoff = config_.backoff_initial_s;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      default_sleep(std::min(backoff, config_.backoff_max_s));
      backoff *= config_.backoff_multiplier;
    }
    auto res = client->Post(prefix_ + "/embeddings", headers, body.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (transient_status(res->status)) {
      last_error = fmt::format("HTTP {}", res->status);
      continue;
    }
    if (res->status != 200) throw BackendError(fmt::format("HTTP {} from embeddings endpoint", res->status));
    try {
      return json::parse(res->body).at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception&) {
      throw BackendError("embeddings reply has no vector");
    }
  }
  throw BackendError("embedding request failed: " + last_error);
}

}  // namespace mlagent
