#include <algorithm>
#include <map>

#include <fmt/format.h>

#include "mlagent/orchestrator.hpp"

namespace mlagent {

json build_report(const std::vector<TraceLine>& lines) {
  const ExplorationGraph graph = replay_graph(lines);

  std::map<std::string, long> stages;
  std::set<long> rounds;
  struct StepUsage {
    long calls = 0;
    long prompt_tokens = 0;
    long completion_tokens = 0;
    double latency_ms = 0.0;
  };
  std::map<std::string, StepUsage> usage;
  json final = nullptr;
  for (const auto& l : lines) {
    const TraceEvent& e = l.event;
    if (e.kind == EventKind::LoopStart) {
      ++stages[e.payload.value("stage", std::string("unknown"))];
      rounds.insert(e.round);
    } else if (e.kind == EventKind::BackendCall) {
      auto& u = usage[e.payload.at("step").get<std::string>()];
      ++u.calls;
      u.prompt_tokens += e.payload.value("prompt_tokens", 0L);
      u.completion_tokens += e.payload.value("completion_tokens", 0L);
      u.latency_ms += e.payload.value("latency_ms", 0.0);
    } else if (e.kind == EventKind::FinalSubmit && e.payload.contains("node")) {
      final = e.payload;
      final.erase("ranking");
    }
  }

  // A loop improves when its node beats the best of its parents (roots never do).
  long with_parents = 0, improved = 0, executed = 0, failed = 0;
  std::optional<double> first_success;
  for (const auto& [id, n] : graph.nodes()) {
    if (n.executed()) {
      ++executed;
      if (!first_success) first_success = n.committed_elapsed_s;
    } else {
      ++failed;
    }
    if (n.parent_ids.empty()) continue;
    ++with_parents;
    if (!n.executed()) continue;
    const Node* best_parent = nullptr;
    for (NodeId p : n.parent_ids) {
      const Node& pn = graph.node(p);
      if (pn.executed() && (!best_parent || node_better(pn, *best_parent))) best_parent = &pn;
    }
    if (!best_parent || compare_scores(*n.score, *best_parent->score) == Ordering::ABetter) ++improved;
  }

  json usage_j = json::object();
  long prompt_total = 0, completion_total = 0, calls_total = 0;
  for (const auto& [step, u] : usage) {
    usage_j[step] = {{"calls", u.calls},
                     {"prompt_tokens", u.prompt_tokens},
                     {"completion_tokens", u.completion_tokens},
                     {"latency_ms", u.latency_ms},
                     {"phase", step_phase(step) == Phase::Development ? "development" : "research"}};
    prompt_total += u.prompt_tokens;
    completion_total += u.completion_tokens;
    calls_total += u.calls;
  }

  json branches = json::array();
  for (const auto& [b, ids] : graph.branches()) {
    long ok = 0;
    for (NodeId id : ids) ok += graph.node(id).executed() ? 1 : 0;
    const auto best = branch_best(graph, b);
    branches.push_back({{"branch", b},
                        {"merge", b == kMergeBranch},
                        {"nodes", ids.size()},
                        {"executed", ok},
                        {"failed", static_cast<long>(ids.size()) - ok},
                        {"best_node", best ? json(best->id) : json(nullptr)},
                        {"best_score", best ? json(best->score->value) : json(nullptr)},
                        {"pruned", graph.is_pruned(b)}});
  }

  const auto best = global_best(graph);
  json stages_j = json::object();
  for (const auto& [s, n] : stages) stages_j[s] = n;
  return json{{"loops", graph.nodes().size()},
              {"rounds", rounds.size()},
              {"executed", executed},
              {"failed", failed},
              {"loops_by_stage", stages_j},
              {"improve_rate", with_parents ? json(static_cast<double>(improved) / static_cast<double>(with_parents))
                                            : json(nullptr)},
              {"first_success_s", first_success ? json(*first_success) : json(nullptr)},
              {"best_validation", best ? json{{"node", best->id}, {"score", *best->score}} : json(nullptr)},
              {"usage",
               {{"by_step", usage_j},
                {"calls", calls_total},
                {"prompt_tokens", prompt_total},
                {"completion_tokens", completion_total}}},
              {"branches", branches},
              {"final", final}};
}

namespace {

std::string opt_number(const json& v, const char* fmt_spec = "{:.4f}") {
  return v.is_null() ? std::string("-") : fmt::format(fmt::runtime(fmt_spec), v.get<double>());
}

}  // namespace

std::string render_report(const json& r) {
  std::string out;
  out += fmt::format("{:<22}{}\n", "loops", r.at("loops").get<long>());
  out += fmt::format("{:<22}{}\n", "rounds", r.at("rounds").get<long>());
  out += fmt::format("{:<22}{}\n", "executed", r.at("executed").get<long>());
  out += fmt::format("{:<22}{}\n", "failed", r.at("failed").get<long>());
  for (const auto& [stage, n] : r.at("loops_by_stage").items()) {
    out += fmt::format("{:<22}{}\n", "loops (" + stage + ")", n.get<long>());
  }
  out += fmt::format("{:<22}{}\n", "improve rate", opt_number(r.at("improve_rate"), "{:.3f}"));
  out += fmt::format("{:<22}{}\n", "first success (s)", opt_number(r.at("first_success_s"), "{:.1f}"));
  const json& best = r.at("best_validation");
  out += fmt::format("{:<22}{}\n", "best validation",
                     best.is_null() ? std::string("-")
                                    : fmt::format("node {} = {:.6f}", best.at("node").get<long>(),
                                                  best.at("score").at("value").get<double>()));
  const json& final = r.at("final");
  if (final.is_null() || final.at("node").is_null()) {
    out += fmt::format("{:<22}{}\n", "final", final.is_null() ? "-" : final.value("error", "-"));
  } else {
    out += fmt::format("{:<22}node {} (holdout {} = {:.6f})\n", "final", final.at("node").get<long>(),
                       final.at("holdout").at("metric").get<std::string>(),
                       final.at("holdout").at("value").get<double>());
  }

  out += "\nusage\n";
  out += fmt::format("  {:<22}{:>7}{:>14}{:>14}{:>12}\n", "step", "calls", "prompt tok", "compl tok", "ms");
  for (const auto& [step, u] : r.at("usage").at("by_step").items()) {
    out += fmt::format("  {:<22}{:>7}{:>14}{:>14}{:>12.0f}\n", step, u.at("calls").get<long>(),
                       u.at("prompt_tokens").get<long>(), u.at("completion_tokens").get<long>(),
                       u.at("latency_ms").get<double>());
  }
  const json& tot = r.at("usage");
  out += fmt::format("  {:<22}{:>7}{:>14}{:>14}\n", "total", tot.at("calls").get<long>(),
                     tot.at("prompt_tokens").get<long>(), tot.at("completion_tokens").get<long>());

  out += "\nbranches\n";
  out += fmt::format("  {:<8}{:>7}{:>10}{:>8}{:>11}{:>12}  {}\n", "branch", "nodes", "executed", "failed", "best node",
                     "best score", "state");
  for (const auto& b : r.at("branches")) {
    const std::string name = b.at("merge").get<bool>() ? "merge" : std::to_string(b.at("branch").get<int>());
    out += fmt::format("  {:<8}{:>7}{:>10}{:>8}{:>11}{:>12}  {}\n", name, b.at("nodes").get<long>(),
                       b.at("executed").get<long>(), b.at("failed").get<long>(),
                       b.at("best_node").is_null() ? std::string("-") : std::to_string(b.at("best_node").get<long>()),
                       opt_number(b.at("best_score")), b.at("pruned").get<bool>() ? "pruned" : "active");
  }
  return out;
}

}  // namespace mlagent
