#include "mlagent/json_io.hpp"

#include "mlagent/errors.hpp"

namespace mlagent {

void to_json(json& j, const ScoreRecord& s) {
  j = json{{"value", s.value},
           {"metric", s.metric_name},
           {"higher_is_better", s.higher_is_better},
           {"source", s.source == ScoreSource::Holdout ? "holdout" : "validation"}};
}

void from_json(const json& j, ScoreRecord& s) {
  s.value = j.at("value").get<double>();
  s.metric_name = j.at("metric").get<std::string>();
  s.higher_is_better = j.at("higher_is_better").get<bool>();
  s.source = j.at("source").get<std::string>() == "holdout" ? ScoreSource::Holdout : ScoreSource::Validation;
}

void to_json(json& j, const DimScores& s) {
  j = json{{"alignment", s.alignment},
           {"impact", s.impact},
           {"novelty", s.novelty},
           {"feasibility", s.feasibility},
           {"risk_reward", s.risk_reward}};
}

void from_json(const json& j, DimScores& s) {
  s.alignment = j.at("alignment").get<int>();
  s.impact = j.at("impact").get<int>();
  s.novelty = j.at("novelty").get<int>();
  s.feasibility = j.at("feasibility").get<int>();
  s.risk_reward = j.at("risk_reward").get<int>();
}

void to_json(json& j, const Hypothesis& h) {
  j = json{{"text", h.text},
           {"component", std::string(to_string(h.component))},
           {"problem_ref", h.problem_ref},
           {"scores", h.scores},
           {"origin", std::string(to_string(h.origin))}};
  j["embedding"] = h.embedding ? json(*h.embedding) : json(nullptr);
}

void from_json(const json& j, Hypothesis& h) {
  h.text = j.at("text").get<std::string>();
  auto c = parse_component(j.at("component").get<std::string>());
  auto o = parse_origin(j.at("origin").get<std::string>());
  if (!c || !o) throw Error("invalid hypothesis component or origin in record");
  h.component = *c;
  h.origin = *o;
  h.problem_ref = j.at("problem_ref").get<std::string>();
  h.scores = j.at("scores").get<DimScores>();
  if (j.contains("embedding") && !j.at("embedding").is_null()) {
    h.embedding = j.at("embedding").get<std::vector<double>>();
  } else {
    h.embedding.reset();
  }
}

void to_json(json& j, const Node& n) {
  j = json{{"id", n.id},
           {"parent_ids", n.parent_ids},
           {"branch_id", n.branch_id},
           {"loop_index", n.loop_index},
           {"round", n.round},
           {"hypothesis", n.hypothesis},
           {"code", n.code},
           {"workspace", n.workspace},
           {"feedback", n.feedback},
           {"status", std::string(to_string(n.status))},
           {"wall_time_s", n.wall_time_s},
           {"debug_time_s", n.debug_time_s},
           {"full_time_s", n.full_time_s},
           {"debug_attempts", n.debug_attempts},
           {"committed_elapsed_s", n.committed_elapsed_s}};
  j["score"] = n.score ? json(*n.score) : json(nullptr);
}

void from_json(const json& j, Node& n) {
  n.id = j.at("id").get<NodeId>();
  n.parent_ids = j.at("parent_ids").get<std::vector<NodeId>>();
  n.branch_id = j.at("branch_id").get<BranchId>();
  n.loop_index = j.at("loop_index").get<long>();
  n.round = j.at("round").get<long>();
  n.hypothesis = j.at("hypothesis").get<Hypothesis>();
  n.code = j.at("code").get<std::string>();
  n.workspace = j.at("workspace").get<std::string>();
  n.feedback = j.at("feedback").get<std::string>();
  auto st = parse_node_status(j.at("status").get<std::string>());
  if (!st) throw Error("invalid node status in record");
  n.status = *st;
  n.wall_time_s = j.at("wall_time_s").get<double>();
  n.debug_time_s = j.value("debug_time_s", 0.0);
  n.full_time_s = j.value("full_time_s", 0.0);
  n.debug_attempts = j.value("debug_attempts", 0);
  n.committed_elapsed_s = j.value("committed_elapsed_s", 0.0);
  if (j.contains("score") && !j.at("score").is_null()) {
    n.score = j.at("score").get<ScoreRecord>();
  } else {
    n.score.reset();
  }
}

void to_json(json& j, const TaskSpec& t) {
  j = json{{"Task Type", t.task_type},
           {"Data Type", t.data_type},
           {"Brief Description", t.brief_description},
           {"Metric Name", t.metric_name},
           {"Metric Direction", t.higher_is_better},
           {"Longer time limit required", t.longer_time_limit},
           {"workspace_root", t.workspace_root.string()},
           {"entrypoint_command", t.entrypoint_command}};
}

void from_json(const json& j, TaskSpec& t) {
  t = parse_task_analysis(j.dump());
}

json graph_to_json(const ExplorationGraph& graph) {
  json nodes = json::array();
  for (const auto& [id, n] : graph.nodes()) nodes.push_back(n);
  json branches = json::object();
  for (const auto& [b, ids] : graph.branches()) branches[std::to_string(b)] = ids;
  return json{{"nodes", nodes},
              {"branches", branches},
              {"loop_counter", graph.loop_counter()},
              {"pruned", std::vector<BranchId>(graph.pruned().begin(), graph.pruned().end())}};
}

}  // namespace mlagent
