#pragma once

#include <atomic>
#include <functional>
#include <string>

#include "mlagent/backend.hpp"

namespace mlagent {

struct HttpBackendConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string research_model = "o3";
  std::string development_model = "gpt-4.1";
  std::string embedding_model = "text-embedding-3-small";
  std::size_t embedding_dimension = 1536;
  bool send_temperature = true;
  int max_retries = 3;
  double timeout_s = 120.0;
  double backoff_initial_s = 1.0;
  double backoff_multiplier = 2.0;
  double backoff_max_s = 30.0;
};

/// Splits "scheme://host[:port][/prefix]" into the httplib client address and
/// the path prefix. Throws ConfigError on anything else.
std::pair<std::string, std::string> split_base_url(const std::string& base_url);

/// OpenAI-compatible chat-completions client. Transient failures (HTTP 429,
/// 5xx, connection errors, timeouts) are retried with exponential backoff; the
/// idempotency key is sent unchanged on every attempt.
class HttpChatBackend final : public PromptBackend {
 public:
  using Sleeper = std::function<void(double seconds)>;

  explicit HttpChatBackend(HttpBackendConfig config, Sleeper sleeper = {});

  PromptResponse complete(const PromptRequest& request) override;
  std::string id() const override;

  Usage usage_totals() const { return {prompt_tokens_.load(), completion_tokens_.load()}; }
  long retries() const { return retries_.load(); }

 private:
  HttpBackendConfig config_;
  Sleeper sleep_;
  std::string address_;
  std::string prefix_;
  std::string api_key_;
  std::atomic<long> prompt_tokens_{0};
  std::atomic<long> completion_tokens_{0};
  std::atomic<long> retries_{0};
};

/// Embeddings endpoint of the same protocol.
class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(HttpBackendConfig config);
  std::vector<double> embed(std::string_view text) override;
  std::size_t dimension() const override { return config_.embedding_dimension; }

 private:
  HttpBackendConfig config_;
  std::string address_;
  std::string prefix_;
  std::string api_key_;
};

}  // namespace mlagent
