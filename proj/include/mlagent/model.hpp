#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mlagent {

/// Structured view of a competition description.
struct TaskSpec {
  std::string task_type;
  std::string data_type;
  std::string brief_description;
  std::string metric_name;
  bool higher_is_better = true;
  bool longer_time_limit = false;
  std::filesystem::path workspace_root;
  std::string entrypoint_command = "python3 main.py";
};

/// Parses the JSON competition-analysis document ("Task Type", "Metric Name",
/// "Metric Direction", ...). Unknown keys are ignored; a fenced ```json block is
/// accepted. Throws MissingField or MalformedDocument.
TaskSpec parse_task_analysis(std::string_view raw);

enum class ScoreSource { Validation, Holdout };

struct ScoreRecord {
  double value = 0.0;
  std::string metric_name;
  bool higher_is_better = true;
  ScoreSource source = ScoreSource::Validation;
};

/// Builds a score, rejecting non-finite values.
ScoreRecord make_score(double value, const TaskSpec& task, ScoreSource source);

enum class Ordering { ABetter, BBetter, Tie };

/// Direction-aware comparison. Throws MetricMismatch when the two records
/// disagree on metric name or direction.
Ordering compare_scores(const ScoreRecord& a, const ScoreRecord& b);

enum class Component { DataLoadSpec, FeatureEng, Model, Ensemble, Workflow };
enum class Origin { CurrentBranch, GlobalBest, KernelSampled, Created, Modified };

std::string_view to_string(Component c);
std::string_view to_string(Origin o);
std::optional<Component> parse_component(std::string_view s);
std::optional<Origin> parse_origin(std::string_view s);

struct DimScores {
  int alignment = 5;
  int impact = 5;
  int novelty = 5;
  int feasibility = 5;
  int risk_reward = 5;

  std::array<int, 5> values() const { return {alignment, impact, novelty, feasibility, risk_reward}; }
  bool valid() const;
  bool operator==(const DimScores&) const = default;
};

struct Hypothesis {
  std::string text;
  Component component = Component::Model;
  std::string problem_ref;
  DimScores scores;
  Origin origin = Origin::CurrentBranch;
  std::optional<std::vector<double>> embedding;
};

using NodeId = long;
using BranchId = int;

/// Merged nodes live in their own branch; regular branches are numbered from 1.
inline constexpr BranchId kMergeBranch = 0;

enum class NodeStatus { Drafting, Debugged, Executed, Failed, Pruned };
std::string_view to_string(NodeStatus s);
std::optional<NodeStatus> parse_node_status(std::string_view s);

struct Node {
  NodeId id = -1;
  std::vector<NodeId> parent_ids;
  BranchId branch_id = 1;
  long loop_index = 0;
  long round = 0;
  Hypothesis hypothesis;
  std::string code;
  std::string workspace;
  std::optional<ScoreRecord> score;
  std::string feedback;
  NodeStatus status = NodeStatus::Drafting;
  double wall_time_s = 0.0;
  double debug_time_s = 0.0;
  double full_time_s = 0.0;
  int debug_attempts = 0;
  double committed_elapsed_s = 0.0;

  bool executed() const { return status == NodeStatus::Executed && score.has_value(); }
};

/// The DAG of candidate solutions. Owned by a single coordinator; workers
/// receive const snapshots.
class ExplorationGraph {
 public:
  ExplorationGraph();

  /// Assigns the next id and loop index, validates invariants, and stores
  /// the node. Returns the stored node.
  const Node& commit(Node node);

  /// Re-inserts a node with its recorded id (used when replaying a trace).
  /// The id must equal next_id().
  const Node& restore(Node node);

  const Node& node(NodeId id) const;
  Node* find(NodeId id);
  const Node* find(NodeId id) const;
  bool has_branch(BranchId b) const { return branches_.count(b) != 0; }

  const std::map<NodeId, Node>& nodes() const { return nodes_; }
  const std::map<BranchId, std::vector<NodeId>>& branches() const { return branches_; }
  long loop_counter() const { return loop_counter_; }
  NodeId next_id() const { return static_cast<NodeId>(nodes_.size()); }
  const std::string& created_at() const { return created_at_; }
  void set_created_at(std::string ts) { created_at_ = std::move(ts); }
  bool empty() const { return nodes_.empty(); }

  /// Regular (non-merge) branch ids, ascending.
  std::vector<BranchId> regular_branches() const;
  BranchId next_branch_id() const;

  const std::set<BranchId>& pruned() const { return pruned_; }
  void set_pruned(std::set<BranchId> pruned) { pruned_ = std::move(pruned); }
  bool is_pruned(BranchId b) const { return pruned_.count(b) != 0; }

  /// Latest committed node of a branch, if any.
  const Node* frontier(BranchId b) const;

 private:
  const Node& insert(Node node);

  std::map<NodeId, Node> nodes_;
  std::map<BranchId, std::vector<NodeId>> branches_;
  std::set<BranchId> pruned_;
  long loop_counter_ = 0;
  std::string created_at_;
};

/// True when `a` should be preferred over `b`: present scores beat absent
/// ones, then direction-aware score, then the lower node id.
bool node_better(const Node& a, const Node& b);

/// Best executed node in a branch. Throws UnknownBranch.
std::optional<Node> branch_best(const ExplorationGraph& graph, BranchId branch);
std::optional<Node> global_best(const ExplorationGraph& graph);

/// Kahn topological order; throws Error on a cycle.
std::vector<NodeId> topological_order(const ExplorationGraph& graph);

/// ISO-8601 UTC timestamp of now.
std::string utc_timestamp();

}  // namespace mlagent
