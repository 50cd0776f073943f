#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mlagent/backend.hpp"
#include "mlagent/executor.hpp"
#include "mlagent/model.hpp"
#include "mlagent/planner.hpp"
#include "mlagent/prompts.hpp"

namespace mlagent {

/// Private per-loop sandbox directory. `input` is a link to the shared,
/// solution-visible split; `output` receives the submission.
struct Workspace {
  std::filesystem::path root;
  std::filesystem::path input_dir;
  std::filesystem::path output_dir;
  std::filesystem::path scratch_dir;

  std::filesystem::path submission_path() const { return output_dir / "submission.csv"; }

  /// Creates root/{output,scratch} and links root/input to `public_data`.
  static Workspace create(const std::filesystem::path& root, const std::filesystem::path& public_data);

  /// Variables exported to solution processes.
  std::map<std::string, std::string> environment() const;
};

struct DevConfig {
  int max_debug_attempts = 5;
  double safety_factor = 0.8;
  std::string entry_file = "main.py";
  std::string debug_flag = "--debug";
};

struct DebugReport {
  bool exit_ok = false;
  double debug_time_s = 0.0;
  double estimated_time_s = 0.0;
  double wall_time_s = 0.0;
  bool timed_out = false;
  std::string failure;  // empty when exit_ok
  std::string stdout_tail;
  std::string stderr_tail;
};

struct ExecutionResult {
  bool exit_ok = false;
  double wall_time_s = 0.0;
  std::optional<std::filesystem::path> submission_path;
  bool timed_out = false;
  std::string failure;
  std::string stdout_tail;
  std::string stderr_tail;
};

inline constexpr std::string_view kTimeoutMarker = "Timeout";
inline constexpr std::string_view kMissingSubmission = "MissingSubmission";
inline constexpr std::string_view kEstimateExceedsCap = "estimated runtime exceeds cap";
inline constexpr std::string_view kEstimateExceedsBudget = "estimated runtime exceeds remaining budget";

/// Splits a command template on blanks.
std::vector<std::string> split_command(const std::string& command);

/// Constraint lines derived from the plan flags.
std::string plan_constraints(const Plan& plan);

/// Asks the backend for an entrypoint script implementing `hypothesis`; with
/// parent code the prompt asks for an edit of it.
std::string draft_solution(const Hypothesis& hypothesis, const std::optional<std::string>& parent_code,
                           const TaskSpec& task, const Plan& plan, PromptSession& session,
                           const PromptLibrary& prompts, const DevConfig& config);

DebugReport run_debug(const std::string& code, const Workspace& workspace, Executor& executor, double cap_s,
                      const TaskSpec& task, const DevConfig& config);

ExecutionResult run_full(const std::string& code, const Workspace& workspace, Executor& executor, double cap_s,
                         const TaskSpec& task, const DevConfig& config);

struct CodingOutcome {
  std::string code;
  std::vector<DebugReport> debug_runs;
  std::optional<ExecutionResult> full_run;
  std::string feedback;
  int debug_attempts = 0;
  double debug_time_s = 0.0;  // summed sandbox time of the debug runs
  double full_time_s = 0.0;

  bool ok() const { return full_run && full_run->exit_ok; }
};

/// Draft, debug and revise until a debug run passes the gate (or attempts run
/// out), then one full run. Never throws for solution failures; backend
/// errors propagate.
CodingOutcome coding_loop(const Hypothesis& hypothesis, const std::optional<std::string>& parent_code,
                          const TaskSpec& task, const Plan& plan, Executor& executor, PromptSession& session,
                          const PromptLibrary& prompts, const Workspace& workspace, double remaining_budget_s,
                          const DevConfig& config);

/// Stable hex digest of a code text (used to tie debug and full runs together in the trace).
std::string code_digest(const std::string& code);

}  // namespace mlagent
