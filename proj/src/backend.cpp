#include "mlagent/backend.hpp"

#include <array>
#include <cctype>
#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "mlagent/errors.hpp"
#include "mlagent/rng.hpp"

namespace mlagent {

namespace {

constexpr std::array<std::string_view, 7> kSteps{
    steps::kTaskAnalysis,      steps::kIdentifyProblems, steps::kGenerateHypotheses, steps::kSelectHypothesis,
    steps::kDraftSolution,     steps::kReviseSolution,   steps::kSelectSota,
};

constexpr std::array<std::pair<EventKind, std::string_view>, 12> kEventKinds{{
    {EventKind::LoopStart, "loop_start"},
    {EventKind::Plan, "plan"},
    {EventKind::Pool, "pool"},
    {EventKind::Selection, "selection"},
    {EventKind::Draft, "draft"},
    {EventKind::Debug, "debug"},
    {EventKind::FullRun, "full_run"},
    {EventKind::Grade, "grade"},
    {EventKind::NodeCommitted, "node_committed"},
    {EventKind::Merge, "merge"},
    {EventKind::FinalSubmit, "final_submit"},
    {EventKind::BackendCall, "backend_call"},
}};

}  // namespace

bool is_known_step(std::string_view step) {
  for (auto s : kSteps) {
    if (s == step) return true;
  }
  return false;
}

Phase step_phase(std::string_view step) {
  return step == steps::kDraftSolution || step == steps::kReviseSolution ? Phase::Development : Phase::Research;
}

std::string_view to_string(EventKind k) {
  for (const auto& [kind, name] : kEventKinds) {
    if (kind == k) return name;
  }
  return "unknown";
}

std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (const auto& [kind, name] : kEventKinds) {
    if (name == s) return kind;
  }
  return std::nullopt;
}

json to_json_line(const TraceEvent& e) {
  return json{{"ts", e.timestamp},
              {"kind", std::string(to_string(e.kind))},
              {"round", e.round},
              {"branch", e.branch},
              {"payload", e.payload}};
}

TraceEvent event_from_json(const json& j) {
  TraceEvent e;
  e.timestamp = j.at("ts").get<std::string>();
  auto kind = parse_event_kind(j.at("kind").get<std::string>());
  if (!kind) throw Error("unknown trace event kind");
  e.kind = *kind;
  e.round = j.at("round").get<long>();
  e.branch = j.at("branch").get<BranchId>();
  e.payload = j.at("payload");
  return e;
}

void EventBuffer::emit(EventKind kind, json payload) {
  events_.push_back(TraceEvent{utc_timestamp(), kind, round_, branch_, std::move(payload)});
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::vector<double> HashedEmbedder::embed(std::string_view text) {
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw EmptyText();
  std::vector<double> v(dimension_, 0.0);
  for (const auto& t : tokens) v[fnv1a(t) % dimension_] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

PromptSession::PromptSession(PromptBackend& backend, std::string key_prefix, int stream, BackendDefaults defaults,
                             EventBuffer* events)
    : backend_(backend), key_prefix_(std::move(key_prefix)), stream_(stream), defaults_(defaults), events_(events) {}

PromptResponse PromptSession::ask(std::string_view step, std::string prompt) {
  if (!is_known_step(step)) throw InvalidArgument(fmt::format("unknown pipeline step '{}'", step));
  PromptRequest req;
  req.step_name = std::string(step);
  req.rendered_prompt = std::move(prompt);
  req.temperature = step_phase(step) == Phase::Development ? defaults_.development_temperature
                                                            : defaults_.research_temperature;
  req.max_tokens = defaults_.max_tokens;
  req.idempotency_key = fmt::format("{}/{}/{}", key_prefix_, step, calls_.size());
  req.stream = stream_;

  PromptResponse resp = backend_.complete(req);
  if (resp.usage.prompt_tokens < 0 || resp.usage.completion_tokens < 0) {
    throw BackendError("backend reported negative usage");
  }
  calls_.push_back({req.step_name, stream_, req.idempotency_key, resp.usage, resp.latency_ms, resp.backend_id});
  if (events_) {
    events_->emit(EventKind::BackendCall, json{{"step", req.step_name},
                                               {"stream", stream_},
                                               {"idempotency_key", req.idempotency_key},
                                               {"backend", resp.backend_id},
                                               {"prompt_tokens", resp.usage.prompt_tokens},
                                               {"completion_tokens", resp.usage.completion_tokens},
                                               {"latency_ms", resp.latency_ms},
                                               {"prompt", req.rendered_prompt},
                                               {"response", resp.text}});
  }
  return resp;
}

}  // namespace mlagent
