#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "mlagent/events.hpp"

namespace mlagent {

/// Pipeline steps a backend can be asked to perform.
namespace steps {
inline constexpr std::string_view kTaskAnalysis = "task_analysis";
inline constexpr std::string_view kIdentifyProblems = "identify_problems";
inline constexpr std::string_view kGenerateHypotheses = "generate_hypotheses";
inline constexpr std::string_view kSelectHypothesis = "select_hypothesis";
inline constexpr std::string_view kDraftSolution = "draft_solution";
inline constexpr std::string_view kReviseSolution = "revise_solution";
inline constexpr std::string_view kSelectSota = "select_sota";
}  // namespace steps

enum class Phase { Research, Development };

bool is_known_step(std::string_view step);
/// Drafting and revising code are development; everything else is research.
Phase step_phase(std::string_view step);

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct PromptRequest {
  std::string step_name;
  std::string rendered_prompt;
  double temperature = 0.7;
  int max_tokens = 4096;
  std::string idempotency_key;
  int stream = 0;  // branch id; scripted replay keeps one cursor per stream
};

struct PromptResponse {
  std::string text;
  Usage usage;
  double latency_ms = 0.0;
  std::string backend_id;
};

/// Chat-completion style backend. Implementations must tolerate concurrent callers.
class PromptBackend {
 public:
  virtual ~PromptBackend() = default;
  virtual PromptResponse complete(const PromptRequest& request) = 0;
  virtual std::string id() const = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// Throws EmptyText for empty input.
  virtual std::vector<double> embed(std::string_view text) = 0;
  virtual std::size_t dimension() const = 0;
};

/// Offline embedder: lower-cased alphanumeric tokens hashed (FNV-1a) into a
/// fixed number of buckets, counted, then L2-normalised.
class HashedEmbedder final : public Embedder {
 public:
  explicit HashedEmbedder(std::size_t dimension = 256) : dimension_(dimension) {}
  std::vector<double> embed(std::string_view text) override;
  std::size_t dimension() const override { return dimension_; }

 private:
  std::size_t dimension_;
};

std::vector<std::string> tokenize(std::string_view text);

/// Replays fixture responses keyed by (step, stream, call index).
///
/// Directory layout: `<root>/<step>/NNN.txt` holds the shared sequence that
/// every stream replays independently; `<root>/<step>/branch<k>/NNN.txt`
/// overrides it for stream k. Running past the end throws FixtureExhausted.
class ScriptedBackend final : public PromptBackend {
 public:
  ScriptedBackend() = default;
  static std::unique_ptr<ScriptedBackend> from_directory(const std::filesystem::path& root);

  void add(std::string step, std::vector<std::string> responses);
  void add_for_stream(std::string step, int stream, std::vector<std::string> responses);

  PromptResponse complete(const PromptRequest& request) override;
  std::string id() const override { return "scripted"; }

  /// Number of responses already consumed for (step, stream).
  std::size_t cursor(const std::string& step, int stream) const;
  void set_cursor(const std::string& step, int stream, std::size_t index);

 private:
  const std::vector<std::string>* sequence(const std::string& step, int stream) const;

  std::map<std::string, std::vector<std::string>> shared_;
  std::map<std::pair<std::string, int>, std::vector<std::string>> per_stream_;
  std::map<std::pair<std::string, int>, std::size_t> cursors_;
  mutable std::mutex mutex_;
};

struct BackendDefaults {
  double research_temperature = 0.7;
  double development_temperature = 0.2;
  int max_tokens = 8192;
};

/// One record per backend exchange, appended to the trace.
struct BackendCall {
  std::string step;
  int stream = 0;
  std::string idempotency_key;
  Usage usage;
  double latency_ms = 0.0;
  std::string backend_id;
};

/// Per-loop front end to a backend: fills in temperature by phase, derives
/// deterministic idempotency keys, and logs every exchange.
class PromptSession {
 public:
  PromptSession(PromptBackend& backend, std::string key_prefix, int stream, BackendDefaults defaults = {},
                EventBuffer* events = nullptr);

  PromptResponse ask(std::string_view step, std::string prompt);

  EventBuffer* events() const { return events_; }
  int stream() const { return stream_; }
  const std::vector<BackendCall>& calls() const { return calls_; }

 private:
  PromptBackend& backend_;
  std::string key_prefix_;
  int stream_;
  BackendDefaults defaults_;
  EventBuffer* events_;
  std::vector<BackendCall> calls_;
};

}  // namespace mlagent
