#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mlagent/backend.hpp"
#include "mlagent/config.hpp"
#include "mlagent/eval.hpp"
#include "mlagent/executor.hpp"
#include "mlagent/model.hpp"
#include "mlagent/planner.hpp"
#include "mlagent/synthetic.hpp"
#include "mlagent/trace.hpp"

namespace mlagent {

/// What a task directory provides: description.md, a labelled data file and
/// task.json (column names, data file, and optionally the analysis fields and
/// a synthetic testbed configuration).
struct TaskDefinition {
  std::filesystem::path dir;
  std::string description;
  std::optional<TaskSpec> analysis;
  std::string id_column = "id";
  std::string target_column = "label";
  std::filesystem::path data_file;
  std::optional<SyntheticTaskConfig> synthetic;
};

/// Throws SourceMissing or ConfigError.
TaskDefinition load_task(const std::filesystem::path& dir);
/// Problems found in a task directory; empty when it is usable.
std::vector<std::string> validate_task(const std::filesystem::path& dir);

// ---- exploration structure ----------------------------------------------------

/// Draft: no parents (a new root). Improve: the best node of plan.target_branch.
/// Merge: every regular branch's best plus the global best, deduplicated, in
/// id order. Throws NoViableParent when Improve finds nothing executed, and
/// InvalidArgument when Improve has no target branch.
std::vector<NodeId> select_parents(const ExplorationGraph& graph, const Plan& plan);

struct PruneState {
  std::map<BranchId, int> trailing;  // consecutive rounds behind by more than the margin
  std::set<BranchId> pruned;
};

/// One pruning update. Regular branches whose best trails the global best by
/// more than the relative margin for `patience` consecutive updates are
/// pruned; the branch holding the best regular score is never pruned. Needs at
/// least two branches with executed nodes, otherwise only the counters reset.
/// Pruning is sticky. Returns the pruned set.
std::set<BranchId> prune_branches(const ExplorationGraph& graph, PruneState& state, const PruneConfig& config);

/// True when `candidate` trails `best` by more than `margin`, relative to |best|.
bool trails_by_margin(const ScoreRecord& candidate, const ScoreRecord& best, double margin);

// ---- run ------------------------------------------------------------------------

/// Backend, embedder and executor a run talks to.
struct Components {
  std::unique_ptr<PromptBackend> backend;
  std::unique_ptr<Embedder> embedder;
  std::unique_ptr<Executor> executor;
};

/// Builds components from the configuration. Synthetic tasks run on the
/// synthetic executor; other tasks in a process sandbox. Throws ConfigError.
Components build_components(const RunConfig& config, const TaskDefinition& task);

/// Switches an HTTP configuration to an offline backend: the synthetic one
/// for synthetic tasks, otherwise replayed fixtures. Throws ConfigError when
/// neither is available.
void force_offline(RunConfig& config, const TaskDefinition& task);

struct RunResult {
  std::filesystem::path run_dir;
  ExplorationGraph graph;
  std::optional<FinalSelection> final;
  std::string final_error;  // why no final submission exists
  json report;
  long rounds = 0;
  bool stopped_early = false;  // scripted fixtures ran out
};

/// Fresh run: creates the run directory, splits the data once, explores until
/// the budget (or max_loops) is spent, then selects and writes the final
/// submission and report.json. `components` overrides build_components.
RunResult run(const std::filesystem::path& task_dir, const RunConfig& config,
              std::optional<Components> components = std::nullopt);

/// Continues the run that owns `trace_path`. Rounds that were only partly
/// committed are dropped from the trace and redone. Throws CorruptTrace.
RunResult resume(const std::filesystem::path& trace_path, std::optional<Components> components = std::nullopt);

// ---- reporting ------------------------------------------------------------------

/// Metrics rebuilt from a trace: loop counts, improve rate, first-success
/// time, usage ledger, per-branch summary and the final choice.
json build_report(const std::vector<TraceLine>& lines);
std::string render_report(const json& report);

}  // namespace mlagent
