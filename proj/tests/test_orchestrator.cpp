#include <cstdlib>

#include <doctest.h>

#include "helpers.hpp"
#include "mlagent/csv.hpp"
#include "mlagent/errors.hpp"
#include "mlagent/orchestrator.hpp"
#include "mlagent/planner.hpp"
#include "mlagent/trace.hpp"

using namespace mlagent;
using testing::add_node;
namespace fs = std::filesystem;

namespace {

Plan plan_for(Stage s, std::optional<BranchId> target = std::nullopt) {
  Plan p;
  p.stage = s;
  p.target_branch = target;
  return p;
}

RunConfig small_run(const fs::path& runs_dir, long loops) {
  RunConfig c;
  c.budget_s = 3600;
  c.clock = ClockMode::Loop;
  c.loop_tick_s = 60;
  c.max_loops = loops;
  c.seed = 4;
  c.runs_dir = runs_dir;
  c.run_name = "unit";
  c.eval.rerun = false;
  return c;
}

fs::path synthetic_task(const fs::path& dir) {
  SyntheticTaskConfig s;
  s.rows = 400;
  s.seed = 2;
  s.landscape.seed = 2;
  write_synthetic_task(dir, s);
  return dir;
}

int cli(const std::string& args) {
  const int status = std::system((std::string(MLAGENT_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("parent selection per stage") {
  ExplorationGraph g;
  add_node(g, 1, 0.5);
  add_node(g, 1, 0.7, {0});
  add_node(g, 2, 0.6);
  add_node(g, 3, std::nullopt);
  CHECK(select_parents(g, plan_for(Stage::Draft)).empty());
  CHECK(select_parents(g, plan_for(Stage::Improve, 1)) == std::vector<NodeId>{1});
  CHECK(select_parents(g, plan_for(Stage::Improve, 2)) == std::vector<NodeId>{2});
  CHECK_THROWS_AS(select_parents(g, plan_for(Stage::Improve, 3)), NoViableParent);
  CHECK_THROWS_AS(select_parents(g, plan_for(Stage::Improve)), InvalidArgument);
  CHECK(select_parents(g, plan_for(Stage::Merge)) == std::vector<NodeId>{1, 2});
  add_node(g, kMergeBranch, 0.9, {1, 2});
  CHECK(select_parents(g, plan_for(Stage::Merge)) == std::vector<NodeId>{1, 2, 4});
}

TEST_CASE("margin test is relative and direction aware") {
  CHECK(trails_by_margin(testing::score(0.80), testing::score(0.90), 0.05));
  CHECK_FALSE(trails_by_margin(testing::score(0.86), testing::score(0.90), 0.05));
  CHECK(trails_by_margin(testing::score(1.2, false), testing::score(1.0, false), 0.05));
  CHECK_FALSE(trails_by_margin(testing::score(1.04, false), testing::score(1.0, false), 0.05));
}

TEST_CASE("pruning waits for the patience and spares the leader") {
  ExplorationGraph g;
  add_node(g, 1, 0.9);
  add_node(g, 2, 0.5);
  add_node(g, 3, 0.88);
  PruneConfig cfg;
  cfg.patience = 3;
  PruneState state;
  CHECK(prune_branches(g, state, cfg).empty());
  CHECK(prune_branches(g, state, cfg).empty());
  CHECK(prune_branches(g, state, cfg) == std::set<BranchId>{2});
  CHECK(state.trailing.count(3) == 0);

  // Sticky even after the branch recovers.
  add_node(g, 2, 0.95, {1});
  CHECK(prune_branches(g, state, cfg).count(2));
}

TEST_CASE("pruning needs two scored branches") {
  ExplorationGraph g;
  add_node(g, 1, 0.9);
  add_node(g, 2, std::nullopt);
  PruneState state;
  state.trailing[2] = 5;
  CHECK(prune_branches(g, state, PruneConfig{}).empty());
  CHECK(state.trailing.empty());
}

TEST_CASE("a trailing streak resets when the branch catches up") {
  ExplorationGraph g;
  add_node(g, 1, 0.9);
  add_node(g, 2, 0.5);
  PruneConfig cfg;
  cfg.patience = 2;
  PruneState state;
  prune_branches(g, state, cfg);
  add_node(g, 2, 0.89, {1});
  prune_branches(g, state, cfg);
  CHECK(state.trailing.count(2) == 0);
  CHECK(state.pruned.empty());
}

TEST_CASE("task directories") {
  testing::TempDir dir("task");
  const fs::path task = synthetic_task(dir / "synthetic");
  CHECK(validate_task(task).empty());
  const TaskDefinition def = load_task(task);
  CHECK(def.synthetic.has_value());
  CHECK(fs::exists(def.data_file));
  fs::create_directories(dir / "empty");
  CHECK_FALSE(validate_task(dir / "empty").empty());
  CHECK_THROWS(load_task(dir / "empty"));
}

TEST_CASE("small synthetic run end to end") {
  testing::TempDir dir("run");
  const fs::path task = synthetic_task(dir / "task");
  const RunResult r = run(task, small_run(dir / "runs", 6));
  CHECK(r.graph.nodes().size() == 6);
  REQUIRE(r.final.has_value());
  CHECK(fs::exists(r.final->submission));
  CHECK(fs::exists(r.run_dir / "trace.jsonl"));
  CHECK(fs::exists(r.run_dir / "report.json"));

  // The final pick is the holdout argmax over the candidates it re-graded.
  for (const auto& rc : r.final->ranking) {
    if (rc.grade) CHECK(rc.grade->score <= r.final->grade.score);
  }

  // The trace alone rebuilds the graph.
  const ExplorationGraph replayed = replay_graph(read_trace(r.run_dir / "trace.jsonl"));
  CHECK(graph_to_json(replayed) == graph_to_json(r.graph));

  // A finished run cannot be resumed.
  CHECK_THROWS_AS(resume(r.run_dir / "trace.jsonl"), ConfigError);
}

TEST_CASE("resume redoes what an interruption lost") {
  testing::TempDir dir("run");
  const fs::path task = synthetic_task(dir / "task");
  const RunResult full = run(task, small_run(dir / "runs", 6));
  const fs::path trace = full.run_dir / "trace.jsonl";
  const auto lines = read_trace(trace);

  // Cut the trace right after the second committed node.
  int commits = 0;
  std::uint64_t cut = 0;
  for (const auto& l : lines) {
    if (l.event.kind == EventKind::NodeCommitted && ++commits == 2) {
      cut = l.end_offset;
      break;
    }
  }
  REQUIRE(cut > 0);
  truncate_trace(trace, cut);
  const RunResult resumed = resume(trace);
  CHECK(resumed.graph.nodes().size() == 6);
  REQUIRE(resumed.final.has_value());
  CHECK(graph_to_json(replay_graph(read_trace(trace))) == graph_to_json(resumed.graph));
}

TEST_CASE("command line task tools") {
  testing::TempDir dir("cli");
  CHECK(cli("make-synthetic-task " + (dir / "t").string() + " --seed 3 --rows 200") == 0);
  CHECK(fs::exists(dir / "t" / "train.csv"));
  CHECK(read_csv(dir / "t" / "train.csv").rows.size() == 200);
  CHECK(cli("validate-task " + (dir / "t").string()) == 0);
  fs::create_directories(dir / "empty");
  CHECK(cli("validate-task " + (dir / "empty").string()) == 2);
  CHECK(cli("no-such-command") == 2);
}
