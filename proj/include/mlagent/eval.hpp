#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mlagent/backend.hpp"
#include "mlagent/dev_workflow.hpp"
#include "mlagent/executor.hpp"
#include "mlagent/model.hpp"
#include "mlagent/prompts.hpp"

namespace mlagent {

// ---- splits ---------------------------------------------------------------

struct SplitOptions {
  std::filesystem::path source_file;  // labelled data (CSV)
  std::filesystem::path out_dir;      // receives public/ and private/
  std::string id_column = "id";
  std::string target_column = "label";
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  std::size_t max_stratify_classes = 50;
};

struct SplitManifest {
  double train_fraction = 0.9;
  bool stratified = false;
  std::optional<std::string> class_column;
  std::uint64_t seed = 0;
  std::string id_column = "id";
  std::string target_column = "label";
  std::filesystem::path public_dir;   // train.csv, test.csv, sample_submission.csv
  std::filesystem::path private_dir;  // label.csv
  std::filesystem::path label_file;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;

  std::filesystem::path sample_submission() const { return public_dir / "sample_submission.csv"; }
};

/// Fixed train/holdout split, stratified by class when feasible. Writes the
/// public files and private/label.csv. Throws SourceMissing or WriteFailure.
SplitManifest prepare_splits(const SplitOptions& options);

/// Number of holdout rows per class that prepare_splits allocates.
std::map<std::string, std::size_t> stratified_allocation(const std::map<std::string, std::size_t>& class_counts,
                                                         std::size_t test_rows);

void save_manifest(const SplitManifest& m, const std::filesystem::path& path);
SplitManifest load_manifest(const std::filesystem::path& path);

// ---- grading ----------------------------------------------------------------

struct GradeResult {
  double score = 0.0;
  std::string metric;
};

/// Strict grade contract: the output holds exactly one JSON object with a
/// finite real "score" and a text "metric" (extra keys ignored).
GradeResult parse_grade_output(std::string_view output, const std::string& expected_metric);

class Grader {
 public:
  virtual ~Grader() = default;
  /// Throws GraderCrash or MalformedGradeOutput.
  virtual GradeResult grade(const std::filesystem::path& submission, const SplitManifest& manifest) = 0;
};

/// In-process accuracy grader; emits and parses the same JSON as an external one.
class AccuracyGrader final : public Grader {
 public:
  GradeResult grade(const std::filesystem::path& submission, const SplitManifest& manifest) override;
  static std::string grade_json(const std::filesystem::path& submission, const SplitManifest& manifest);
};

/// Runs a configured command in a private grading directory holding copies of
/// label.csv and submission.csv; stdout must be the grade JSON.
class CommandGrader final : public Grader {
 public:
  CommandGrader(std::string command, std::string metric, std::filesystem::path scratch_root, Executor& executor,
                double timeout_s = 600.0);
  GradeResult grade(const std::filesystem::path& submission, const SplitManifest& manifest) override;

 private:
  std::string command_;
  std::string metric_;
  std::filesystem::path scratch_root_;
  Executor& executor_;
  double timeout_s_;
  std::atomic<long> counter_{0};
};

/// Format and anti-cheat checks against the sample submission. Empty = ok.
std::vector<std::string> validate_submission(const std::filesystem::path& submission,
                                             const std::filesystem::path& sample_submission,
                                             const std::string& id_column = "id");

// ---- selection ---------------------------------------------------------------

struct EvalContext {
  const TaskSpec& task;
  const SplitManifest& manifest;
  Executor& executor;
  Grader& grader;
  DevConfig dev;
  double cap_s = 3600.0;
  std::filesystem::path work_root;  // re-evaluation workspaces are created here
  bool rerun = true;                // re-execute candidates; otherwise grade their stored submissions
  int workers = 1;
};

struct RankedCandidate {
  Node node;
  std::optional<GradeResult> grade;
  std::string failure;
};

/// Top `k` executed candidates by validation score (ties: lower id).
std::vector<Node> collect_candidates(const std::vector<Node>& nodes, std::size_t k);

/// Per-branch bests plus the global best, deduplicated, in id order.
std::vector<Node> final_candidates(const ExplorationGraph& graph);

/// Re-runs and grades the top-k candidates on the fixed holdout and ranks them.
/// Failures rank after all successes. Throws AllCandidatesFailed.
std::vector<RankedCandidate> validation_select(const std::vector<Node>& candidates, const EvalContext& ctx,
                                               std::size_t k = 5);

struct SotaChoice {
  std::optional<std::size_t> index;
  bool fallback = false;
};

/// Backend-judged choice among experiments; index is 0-based. Falls back to
/// the best validation score (earliest on ties) on an unusable reply.
SotaChoice select_sota(const std::vector<std::pair<Node, std::string>>& experiments, const TaskSpec& task,
                       PromptSession* session, const PromptLibrary& prompts);

std::size_t offline_sota(const std::vector<std::pair<Node, std::string>>& experiments);

struct FinalSelection {
  Node node;
  GradeResult grade;
  std::vector<RankedCandidate> ranking;
  std::filesystem::path submission;
};

/// Validation-selects over final_candidates(graph); holdout ties at the top are
/// settled by select_sota. Copies the winner's submission to `final_dir`.
FinalSelection final_submit(const ExplorationGraph& graph, const EvalContext& ctx, PromptSession* session,
                            const PromptLibrary& prompts, const std::filesystem::path& final_dir, std::size_t k = 5);

}  // namespace mlagent
