#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlagent/backend.hpp"
#include "mlagent/memory_kernel.hpp"
#include "mlagent/model.hpp"
#include "mlagent/planner.hpp"
#include "mlagent/prompts.hpp"

namespace mlagent {

enum class ProblemCategory { DataRelated, ModelRelated, EvaluationRelated, ImplementationRelated };
std::string_view to_string(ProblemCategory c);
std::optional<ProblemCategory> parse_problem_category(std::string_view s);

struct Problem {
  std::string description;
  ProblemCategory category = ProblemCategory::ModelRelated;
};

inline constexpr std::size_t kMaxProblems = 3;

enum class SelectionAction { Select, Modify, Create };
std::string_view to_string(SelectionAction a);

struct SelectionOutcome {
  SelectionAction action = SelectionAction::Select;
  Hypothesis hypothesis;
  std::vector<std::size_t> source_refs;  // indices into the flattened pool
  bool downgraded = false;               // a Select of an unknown candidate became a Modify
};

/// Best scores the selector compares: the current branch's and the global one.
struct SotaComparison {
  std::optional<ScoreRecord> branch_best;
  std::optional<ScoreRecord> global_best;

  /// True when the branch does not lead (s_j* <= s*), or has no score yet while
  /// another branch does.
  bool behind() const;
};

/// Stage directives placed in the hypothesis prompts.
namespace directives {
inline constexpr std::string_view kDraftGuidance = "Focus on simple, quick-to-implement hypotheses.";
inline constexpr std::string_view kImproveGuidance = "Focus on meaningful gains without overcomplicating the solution.";
inline constexpr std::string_view kMergeGuidance =
    "Synthesize strengths from multiple traces into one unified solution.";
inline constexpr std::string_view kPrioritizeShared =
    "This branch does not lead: prioritize the global-best hypothesis and the hypotheses sampled from other "
    "branches.";
inline constexpr std::string_view kPrioritizeCurrent =
    "This branch holds the best score: prioritize the hypotheses proposed for this branch.";
}  // namespace directives

std::string_view stage_guidance(Stage stage);

/// What a reasoning step needs besides its own inputs.
struct ReasoningContext {
  const TaskSpec& task;
  PromptSession& session;
  const PromptLibrary& prompts;
  Embedder* embedder = nullptr;
};

/// Asks for at most three categorised problems; extra ones are truncated.
/// One reprompt on a malformed reply, then UnparseableResponse.
std::vector<Problem> identify_problems(const std::string& context, const ReasoningContext& ctx);

/// Asks for 1..max_count scored hypotheses. Out-of-range scores, unknown
/// components or problem numbers count as a malformed reply.
std::vector<Hypothesis> generate_hypotheses(const std::vector<Problem>& problems, const Plan& plan,
                                            const std::string& pool_context, const ReasoningContext& ctx,
                                            int max_count);

/// Lets the backend Select / Modify / Create from the pool.
SelectionOutcome select_hypothesis(const std::vector<PoolEntry>& pool, const Plan& plan,
                                   const SotaComparison& sota, const ReasoningContext& ctx);

/// Weighted mean of the five dimension scores. Throws ZeroWeights.
double aggregate_dim_scores(const DimScores& scores, const std::array<double, 5>& weights);

/// Deterministic selector used without backend judgement: argmax of the
/// equal-weight aggregate, ties to the earlier candidate.
SelectionOutcome offline_select(const std::vector<PoolEntry>& pool);

/// Pool listing as shown to the selector (1-based numbering).
std::string render_pool(const std::vector<PoolEntry>& pool);

std::string direction_text(const TaskSpec& task);

}  // namespace mlagent
