#include "mlagent/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <deque>

#include <fmt/format.h>

#include "mlagent/errors.hpp"

namespace mlagent {

ScoreRecord make_score(double value, const TaskSpec& task, ScoreSource source) {
  if (!std::isfinite(value)) {
    throw InvalidArgument("score value must be finite");
  }
  return ScoreRecord{value, task.metric_name, task.higher_is_better, source};
}

Ordering compare_scores(const ScoreRecord& a, const ScoreRecord& b) {
  if (a.metric_name != b.metric_name || a.higher_is_better != b.higher_is_better) {
    throw MetricMismatch(fmt::format("cannot compare '{}' with '{}'", a.metric_name, b.metric_name));
  }
  if (a.value == b.value) return Ordering::Tie;
  const bool a_larger = a.value > b.value;
  return a_larger == a.higher_is_better ? Ordering::ABetter : Ordering::BBetter;
}

namespace {

constexpr std::array<std::pair<Component, std::string_view>, 5> kComponents{{
    {Component::DataLoadSpec, "DataLoadSpec"},
    {Component::FeatureEng, "FeatureEng"},
    {Component::Model, "Model"},
    {Component::Ensemble, "Ensemble"},
    {Component::Workflow, "Workflow"},
}};

constexpr std::array<std::pair<Origin, std::string_view>, 5> kOrigins{{
    {Origin::CurrentBranch, "current_branch"},
    {Origin::GlobalBest, "global_best"},
    {Origin::KernelSampled, "kernel_sampled"},
    {Origin::Created, "created"},
    {Origin::Modified, "modified"},
}};

constexpr std::array<std::pair<NodeStatus, std::string_view>, 5> kStatuses{{
    {NodeStatus::Drafting, "drafting"},
    {NodeStatus::Debugged, "debugged"},
    {NodeStatus::Executed, "executed"},
    {NodeStatus::Failed, "failed"},
    {NodeStatus::Pruned, "pruned"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
  for (const auto& [e, name] : table) {
    if (e == value) return name;
  }
  return "unknown";
}

template <typename E, std::size_t N>
std::optional<E> value_of(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s) {
  for (const auto& [e, name] : table) {
    if (name == s) return e;
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Component c) { return name_of(kComponents, c); }
std::string_view to_string(Origin o) { return name_of(kOrigins, o); }
std::string_view to_string(NodeStatus s) { return name_of(kStatuses, s); }
std::optional<Component> parse_component(std::string_view s) { return value_of(kComponents, s); }
std::optional<Origin> parse_origin(std::string_view s) { return value_of(kOrigins, s); }
std::optional<NodeStatus> parse_node_status(std::string_view s) { return value_of(kStatuses, s); }

bool DimScores::valid() const {
  const auto v = values();
  return std::all_of(v.begin(), v.end(), [](int x) { return x >= 1 && x <= 10; });
}

ExplorationGraph::ExplorationGraph() : created_at_(utc_timestamp()) {}

const Node& ExplorationGraph::commit(Node node) {
  node.id = next_id();
  node.loop_index = loop_counter_;
  return insert(std::move(node));
}

const Node& ExplorationGraph::restore(Node node) {
  if (node.id != next_id()) {
    throw Error(fmt::format("restored node id {} does not follow {}", node.id, next_id() - 1));
  }
  return insert(std::move(node));
}

const Node& ExplorationGraph::insert(Node node) {
  if (node.status == NodeStatus::Executed && !node.score) {
    throw InvalidArgument(fmt::format("node {} is executed but has no score", node.id));
  }
  std::set<NodeId> seen;
  for (NodeId p : node.parent_ids) {
    // Parents must already exist, and ids only grow, so the graph stays acyclic.
    if (!nodes_.count(p) || p >= node.id) {
      throw InvalidArgument(fmt::format("node {} references unknown parent {}", node.id, p));
    }
    if (!seen.insert(p).second) {
      throw InvalidArgument(fmt::format("node {} lists parent {} twice", node.id, p));
    }
  }
  const NodeId id = node.id;
  const BranchId b = node.branch_id;
  auto [it, inserted] = nodes_.emplace(id, std::move(node));
  if (!inserted) throw InvalidArgument(fmt::format("duplicate node id {}", id));
  branches_[b].push_back(id);
  ++loop_counter_;
  return it->second;
}

const Node& ExplorationGraph::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw InvalidArgument(fmt::format("unknown node {}", id));
  return it->second;
}

Node* ExplorationGraph::find(NodeId id) {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

const Node* ExplorationGraph::find(NodeId id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

std::vector<BranchId> ExplorationGraph::regular_branches() const {
  std::vector<BranchId> out;
  for (const auto& [b, ids] : branches_) {
    if (b != kMergeBranch) out.push_back(b);
  }
  return out;
}

BranchId ExplorationGraph::next_branch_id() const {
  BranchId next = 1;
  for (const auto& [b, ids] : branches_) next = std::max(next, b + 1);
  return next;
}

const Node* ExplorationGraph::frontier(BranchId b) const {
  auto it = branches_.find(b);
  if (it == branches_.end() || it->second.empty()) return nullptr;
  return &nodes_.at(it->second.back());
}

bool node_better(const Node& a, const Node& b) {
  const bool ea = a.executed();
  const bool eb = b.executed();
  if (ea != eb) return ea;
  if (ea) {
    switch (compare_scores(*a.score, *b.score)) {
      case Ordering::ABetter: return true;
      case Ordering::BBetter: return false;
      case Ordering::Tie: break;
    }
  }
  return a.id < b.id;
}

namespace {

std::optional<Node> best_of(const ExplorationGraph& graph, const std::vector<NodeId>& ids) {
  const Node* best = nullptr;
  for (NodeId id : ids) {
    const Node& n = graph.node(id);
    if (!n.executed()) continue;
    if (!best || node_better(n, *best)) best = &n;
  }
  if (!best) return std::nullopt;
  return *best;
}

}  // namespace

std::optional<Node> branch_best(const ExplorationGraph& graph, BranchId branch) {
  auto it = graph.branches().find(branch);
  if (it == graph.branches().end()) throw UnknownBranch(branch);
  return best_of(graph, it->second);
}

std::optional<Node> global_best(const ExplorationGraph& graph) {
  std::vector<NodeId> ids;
  ids.reserve(graph.nodes().size());
  for (const auto& [id, n] : graph.nodes()) ids.push_back(id);
  return best_of(graph, ids);
}

std::vector<NodeId> topological_order(const ExplorationGraph& graph) {
  std::map<NodeId, int> indegree;
  std::map<NodeId, std::vector<NodeId>> children;
  for (const auto& [id, n] : graph.nodes()) {
    indegree[id] += 0;
    for (NodeId p : n.parent_ids) {
      ++indegree[id];
      children[p].push_back(id);
    }
  }
  std::deque<NodeId> ready;
  for (const auto& [id, d] : indegree) {
    if (d == 0) ready.push_back(id);
  }
  std::vector<NodeId> order;
  while (!ready.empty()) {
    NodeId id = ready.front();
    ready.pop_front();
    order.push_back(id);
    for (NodeId c : children[id]) {
      if (--indegree[c] == 0) ready.push_back(c);
    }
  }
  if (order.size() != graph.nodes().size()) throw Error("exploration graph contains a cycle");
  return order;
}

std::string utc_timestamp() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const std::time_t t = system_clock::to_time_t(now);
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  return fmt::format("{}.{:03d}Z", buf, static_cast<int>(ms));
}

}  // namespace mlagent
