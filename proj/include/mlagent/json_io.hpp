#pragma once

#include <json.hpp>

#include "mlagent/model.hpp"

namespace mlagent {

using json = nlohmann::json;

void to_json(json& j, const ScoreRecord& s);
void from_json(const json& j, ScoreRecord& s);
void to_json(json& j, const DimScores& s);
void from_json(const json& j, DimScores& s);
void to_json(json& j, const Hypothesis& h);
void from_json(const json& j, Hypothesis& h);
void to_json(json& j, const Node& n);
void from_json(const json& j, Node& n);
void to_json(json& j, const TaskSpec& t);
void from_json(const json& j, TaskSpec& t);

/// Canonical graph dump (nodes in id order, branches, loop counter, pruned
/// set). Two graphs are identical iff their dumps compare equal.
json graph_to_json(const ExplorationGraph& graph);

}  // namespace mlagent
