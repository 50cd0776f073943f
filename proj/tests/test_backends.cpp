#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include <doctest.h>
#include <httplib.h>

#include "helpers.hpp"
#include "mlagent/backend.hpp"
#include "mlagent/csv.hpp"
#include "mlagent/errors.hpp"
#include "mlagent/http_backend.hpp"
#include "mlagent/json_io.hpp"

using namespace mlagent;
namespace fs = std::filesystem;

namespace {

PromptRequest request(std::string step, int stream = 0) {
  PromptRequest r;
  r.step_name = std::move(step);
  r.stream = stream;
  r.rendered_prompt = "prompt";
  r.idempotency_key = "k";
  return r;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

// Local chat-completions endpoint that rejects the first `failures` calls.
class FakeServer {
 public:
  explicit FakeServer(int failures, int status = 429) : failures_(failures) {
    server_.Post("/v1/chat/completions", [this, status](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mutex_);
        keys.push_back(req.get_header_value("Idempotency-Key"));
        bodies.push_back(req.body);
      }
      if (calls_++ < failures_) {
        res.status = status;
        res.set_content("{}", "application/json");
        return;
      }
      json reply{{"choices", json::array({json{{"message", json{{"role", "assistant"}, {"content", "hello"}}}}})},
                 {"usage", json{{"prompt_tokens", 12}, {"completion_tokens", 3}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  std::vector<std::string> keys;
  std::vector<std::string> bodies;

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  int failures_;
  std::atomic<int> calls_{0};
  std::mutex mutex_;
};

HttpBackendConfig local_config(const std::string& url) {
  HttpBackendConfig c;
  c.base_url = url;
  c.api_key_env = "";
  c.timeout_s = 5.0;
  return c;
}

}  // namespace

TEST_CASE("scripted backend replays then runs out") {
  ScriptedBackend b;
  b.add("draft_solution", {"A", "B"});
  CHECK(b.complete(request("draft_solution")).text == "A");
  CHECK(b.complete(request("draft_solution")).text == "B");
  CHECK_THROWS_AS(b.complete(request("draft_solution")), FixtureExhausted);
  CHECK_THROWS_AS(b.complete(request("select_sota")), FixtureExhausted);
}

TEST_CASE("scripted streams keep separate cursors and overrides") {
  ScriptedBackend b;
  b.add("identify_problems", {"shared0", "shared1"});
  b.add_for_stream("identify_problems", 2, {"own0"});
  CHECK(b.complete(request("identify_problems", 1)).text == "shared0");
  CHECK(b.complete(request("identify_problems", 3)).text == "shared0");
  CHECK(b.complete(request("identify_problems", 2)).text == "own0");
  CHECK(b.complete(request("identify_problems", 1)).text == "shared1");
  CHECK(b.cursor("identify_problems", 1) == 2);
  b.set_cursor("identify_problems", 1, 0);
  CHECK(b.complete(request("identify_problems", 1)).text == "shared0");
}

TEST_CASE("scripted backend from a fixture directory") {
  testing::TempDir dir("fixtures");
  fs::create_directories(dir / "draft_solution" / "branch2");
  write_file(dir / "draft_solution" / "000.txt", "first");
  write_file(dir / "draft_solution" / "001.txt", "second");
  write_file(dir / "draft_solution" / "branch2" / "000.txt", "branch two");
  auto b = ScriptedBackend::from_directory(dir.path());
  CHECK(b->complete(request("draft_solution", 1)).text == "first");
  CHECK(b->complete(request("draft_solution", 1)).text == "second");
  CHECK(b->complete(request("draft_solution", 2)).text == "branch two");
  CHECK_THROWS_AS(ScriptedBackend::from_directory(dir / "absent"), ConfigError);
}

TEST_CASE("step phases") {
  CHECK(step_phase(steps::kDraftSolution) == Phase::Development);
  CHECK(step_phase(steps::kReviseSolution) == Phase::Development);
  CHECK(step_phase(steps::kGenerateHypotheses) == Phase::Research);
  CHECK(is_known_step("select_sota"));
  CHECK_FALSE(is_known_step("write_poem"));
}

TEST_CASE("prompt session sets temperature by phase and logs calls") {
  struct Capture final : PromptBackend {
    std::vector<PromptRequest> seen;
    PromptResponse complete(const PromptRequest& r) override {
      seen.push_back(r);
      return {"ok", {}, 0.0, "capture"};
    }
    std::string id() const override { return "capture"; }
  } backend;
  PromptSession a(backend, "loop3", 2);
  a.ask(steps::kGenerateHypotheses, "p");
  a.ask(steps::kDraftSolution, "p");
  a.ask(steps::kDraftSolution, "p");
  REQUIRE(backend.seen.size() == 3);
  CHECK(backend.seen[0].temperature == doctest::Approx(0.7));
  CHECK(backend.seen[1].temperature == doctest::Approx(0.2));
  CHECK(backend.seen[0].stream == 2);
  CHECK(backend.seen[1].idempotency_key != backend.seen[2].idempotency_key);
  CHECK(a.calls().size() == 3);

  // The same session prefix yields the same keys, so a resumed loop repeats them.
  PromptSession b(backend, "loop3", 2);
  b.ask(steps::kGenerateHypotheses, "p");
  CHECK(backend.seen[3].idempotency_key == backend.seen[0].idempotency_key);
}

TEST_CASE("hashed embedder") {
  HashedEmbedder e(64);
  const auto v = e.embed("Gradient boosting with target encoding");
  CHECK(v.size() == 64);
  CHECK(v == e.embed("Gradient boosting with target encoding"));
  double norm = 0;
  for (double x : v) norm += x * x;
  CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
  CHECK(cosine(e.embed("a b"), e.embed("a c")) < 1.0);
  CHECK(cosine(e.embed("a b"), e.embed("B A")) == doctest::Approx(1.0));
  CHECK_THROWS_AS(e.embed(""), EmptyText);
  CHECK(tokenize("Hello, World-2!") == std::vector<std::string>{"hello", "world", "2"});
}

TEST_CASE("base url splitting") {
  CHECK(split_base_url("https://api.openai.com/v1") == std::make_pair(std::string("https://api.openai.com"),
                                                                      std::string("/v1")));
  CHECK(split_base_url("http://localhost:8080") == std::make_pair(std::string("http://localhost:8080"),
                                                                  std::string("")));
  CHECK(split_base_url("http://h/a/b/").second == "/a/b");
  CHECK_THROWS_AS(split_base_url("localhost:8080"), ConfigError);
}

TEST_CASE("http backend retries transient failures with the same idempotency key") {
  FakeServer server(2);
  std::vector<double> sleeps;
  HttpChatBackend b(local_config(server.base_url()), [&](double s) { sleeps.push_back(s); });
  PromptRequest r = request("generate_hypotheses");
  r.idempotency_key = "loop7-generate_hypotheses-0";
  const PromptResponse resp = b.complete(r);
  CHECK(resp.text == "hello");
  CHECK(resp.usage.prompt_tokens == 12);
  CHECK(b.retries() == 2);
  CHECK(sleeps == std::vector<double>{1.0, 2.0});
  REQUIRE(server.keys.size() == 3);
  for (const auto& k : server.keys) CHECK(k == "loop7-generate_hypotheses-0");
  const json body = json::parse(server.bodies.back());
  CHECK(body.at("model") == "o3");
  CHECK(b.usage_totals().completion_tokens == 3);
}

TEST_CASE("http backend gives up after the retry budget") {
  FakeServer server(100);
  HttpBackendConfig c = local_config(server.base_url());
  c.max_retries = 2;
  HttpChatBackend b(c, [](double) {});
  CHECK_THROWS_AS(b.complete(request("draft_solution")), RateLimited);
  CHECK(server.keys.size() == 3);
}

TEST_CASE("http backend does not retry client errors") {
  FakeServer server(100, 400);
  HttpChatBackend b(local_config(server.base_url()), [](double) {});
  CHECK_THROWS_AS(b.complete(request("draft_solution")), BackendError);
  CHECK(server.keys.size() == 1);
  CHECK(json::parse(server.bodies.front()).at("model") == "gpt-4.1");
}

TEST_CASE("http backend rejects unknown steps before sending") {
  HttpChatBackend b(local_config("http://127.0.0.1:9"), [](double) {});
  CHECK_THROWS_AS(b.complete(request("nonsense")), InvalidArgument);
}
