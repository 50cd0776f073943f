#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "mlagent/backend.hpp"
#include "mlagent/dev_workflow.hpp"
#include "mlagent/http_backend.hpp"
#include "mlagent/json_io.hpp"
#include "mlagent/memory_kernel.hpp"
#include "mlagent/planner.hpp"

namespace mlagent {

enum class ClockMode {
  Wall,       // real elapsed time
  Simulated,  // advances by the longest reported sandbox time of each round
  Loop,       // advances by a fixed tick per committed loop
};

struct PruneConfig {
  bool enabled = true;
  double margin = 0.05;  // relative, direction-aware
  int patience = 3;      // consecutive rounds trailing by more than the margin
};

struct EvalConfig {
  std::size_t candidate_limit = 5;
  bool rerun = true;
  double train_fraction = 0.9;
  std::optional<std::string> grader_command;  // external grader; in-process accuracy otherwise
};

enum class BackendKind { Synthetic, Scripted, Http };

struct BackendSettings {
  BackendKind kind = BackendKind::Synthetic;
  std::optional<std::filesystem::path> fixtures_dir;  // scripted backend
  HttpBackendConfig http;
  BackendDefaults defaults;
  bool http_embeddings = false;  // hashed offline embedder otherwise
};

struct RunConfig {
  double budget_s = 12 * 3600.0;
  int branch_count = 3;
  int worker_count = 3;
  std::uint64_t seed = 0;
  int hypotheses_per_loop = 3;
  long max_loops = 0;  // 0 = no limit besides the budget
  bool collaborative = true;
  bool backend_selection = true;  // false: offline argmax selector
  ClockMode clock = ClockMode::Wall;
  double loop_tick_s = 60.0;
  double round_overhead_s = 1.0;
  PlannerConfig planner;
  KernelParams kernel;
  DevConfig dev;
  EvalConfig eval;
  PruneConfig prune;
  BackendSettings backend;
  std::optional<std::filesystem::path> prompts_dir;
  std::filesystem::path runs_dir = "runs";
  std::optional<std::string> run_name;
  long crash_after_loops = 0;  // test hook: terminate right after this many commits

  void validate() const;  // throws ConfigError
};

std::string_view to_string(ClockMode m);
std::string_view to_string(BackendKind k);

json config_to_json(const RunConfig& c);
/// Overlays `j` on the defaults; unknown sections or keys are ConfigError.
RunConfig config_from_json(const json& j);
RunConfig load_config(const std::filesystem::path& path);

/// "90", "90s", "15m", "12h", "1h30m".
double parse_duration(const std::string& text);

}  // namespace mlagent
