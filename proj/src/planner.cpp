#include "mlagent/planner.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mlagent/errors.hpp"

namespace mlagent {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Draft: return "Draft";
    case Stage::Improve: return "Improve";
    case Stage::Merge: return "Merge";
  }
  return "unknown";
}

int root_count(const ExplorationGraph& graph) {
  int roots = 0;
  for (const auto& [b, ids] : graph.branches()) {
    if (b != kMergeBranch && !ids.empty()) ++roots;
  }
  return roots;
}

Plan make_plan(double elapsed_s, double budget_s, const ExplorationGraph& graph, const PlannerConfig& config) {
  if (!(budget_s > 0.0) || !std::isfinite(budget_s)) throw InvalidArgument("budget must be positive");
  if (!(elapsed_s >= 0.0)) throw InvalidArgument("elapsed time must be non-negative");
  if (elapsed_s >= budget_s) {
    throw BudgetExhausted(fmt::format("elapsed {:.1f}s of a {:.1f}s budget", elapsed_s, budget_s));
  }

  Plan plan;
  plan.elapsed_s = elapsed_s;
  plan.budget_s = budget_s;

  const double draft_end = std::min(config.draft_max_s, config.draft_fraction * budget_s);
  const double merge_start = (1.0 - config.merge_fraction) * budget_s;
  if (elapsed_s >= merge_start) {
    plan.stage = Stage::Merge;
  } else if (elapsed_s < draft_end || root_count(graph) < config.draft_branches) {
    plan.stage = Stage::Draft;
  } else {
    plan.stage = Stage::Improve;
  }

  const bool heavy = plan.stage != Stage::Draft && elapsed_s >= config.heavy_fraction * budget_s;
  plan.allow_ensemble = heavy;
  plan.allow_cross_validation = heavy;

  plan.novelty_bias = std::max(0.0, 1.0 - elapsed_s / (config.novelty_horizon_fraction * budget_s));
  plan.per_execution_cap_s = std::min(config.execution_cap_s, 0.5 * (budget_s - elapsed_s));
  plan.debug_sample_fraction = config.debug_sample_fraction;
  return plan;
}

}  // namespace mlagent
