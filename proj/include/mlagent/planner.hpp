#pragma once

#include <optional>
#include <string_view>

#include "mlagent/model.hpp"

namespace mlagent {

enum class Stage { Draft = 0, Improve = 1, Merge = 2 };
std::string_view to_string(Stage s);

/// Schedule thresholds. Every field is overridable from the run configuration.
struct PlannerConfig {
  double draft_max_s = 3600.0;          // Draft lasts at most this long...
  double draft_fraction = 0.15;         // ...or this fraction of the budget, whichever is shorter
  int draft_branches = 3;               // Draft also continues until this many roots exist
  double merge_fraction = 0.20;         // final fraction of the budget spent merging
  double heavy_fraction = 4.0 / 12.0;   // ensembles / cross-validation allowed from here on
  double novelty_horizon_fraction = 0.5;
  double execution_cap_s = 3600.0;
  double debug_sample_fraction = 0.10;
};

struct Plan {
  Stage stage = Stage::Draft;
  bool allow_ensemble = false;
  bool allow_cross_validation = false;
  double novelty_bias = 1.0;
  double per_execution_cap_s = 0.0;
  double debug_sample_fraction = 0.10;
  double elapsed_s = 0.0;
  double budget_s = 0.0;
  std::optional<BranchId> target_branch;

  double remaining_s() const { return budget_s - elapsed_s; }
};

/// Number of regular branches that have at least one node.
int root_count(const ExplorationGraph& graph);

/// Pure schedule: same arguments, same plan. Throws BudgetExhausted when
/// elapsed_s >= budget_s.
Plan make_plan(double elapsed_s, double budget_s, const ExplorationGraph& graph,
               const PlannerConfig& config = {});

}  // namespace mlagent
