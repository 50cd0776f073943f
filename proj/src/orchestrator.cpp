#include "mlagent/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <future>
#include <iostream>

#include <fmt/format.h>

#include "mlagent/csv.hpp"
#include "mlagent/dev_workflow.hpp"
#include "mlagent/debug_block.hpp"
#include "mlagent/errors.hpp"
#include "mlagent/http_backend.hpp"
#include "mlagent/json_io.hpp"
#include "mlagent/memory_kernel.hpp"
#include "mlagent/prompts.hpp"
#include "mlagent/reasoning.hpp"
#include "mlagent/rng.hpp"

namespace fs = std::filesystem;

namespace mlagent {

namespace {

constexpr const char* kRunFile = "run.json";
constexpr const char* kTraceFile = "trace.jsonl";
constexpr int kCrashExitCode = 75;

json read_json_file(const fs::path& path) {
  const std::string raw = read_file(path);
  try {
    return json::parse(raw);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace

// ---- task directories ---------------------------------------------------------

TaskDefinition load_task(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw SourceMissing(fmt::format("task directory {} does not exist", dir.string()));
  TaskDefinition t;
  t.dir = fs::absolute(dir);
  json meta = json::object();
  if (fs::exists(dir / "task.json")) {
    meta = read_json_file(dir / "task.json");
    if (!meta.is_object()) throw ConfigError("task.json must hold a JSON object");
  }
  try {
    t.id_column = meta.value("id_column", t.id_column);
    t.target_column = meta.value("target_column", t.target_column);
    t.data_file = t.dir / meta.value("data_file", std::string("train.csv"));
    if (meta.contains("Task Type")) t.analysis = parse_task_analysis(meta.dump());
    if (meta.contains("synthetic")) t.synthetic = meta.at("synthetic").get<SyntheticTaskConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("task.json: {}", e.what()));
  } catch (const MissingField& e) {
    throw ConfigError(fmt::format("task.json: {}", e.what()));
  } catch (const MalformedDocument& e) {
    throw ConfigError(fmt::format("task.json: {}", e.what()));
  }
  if (fs::exists(dir / "description.md")) t.description = read_file(dir / "description.md");
  if (t.description.empty() && !t.analysis) {
    throw ConfigError("a task needs description.md or the analysis fields in task.json");
  }
  if (!fs::exists(t.data_file)) throw SourceMissing(fmt::format("data file {} does not exist", t.data_file.string()));
  return t;
}

std::vector<std::string> validate_task(const fs::path& dir) {
  std::vector<std::string> problems;
  TaskDefinition t;
  try {
    t = load_task(dir);
  } catch (const Error& e) {
    problems.push_back(e.what());
    return problems;
  }
  CsvTable data;
  try {
    data = read_csv(t.data_file);
  } catch (const Error& e) {
    problems.push_back(e.what());
    return problems;
  }
  if (!data.column(t.id_column)) problems.push_back(fmt::format("data has no id column '{}'", t.id_column));
  if (!data.column(t.target_column)) {
    problems.push_back(fmt::format("data has no target column '{}'", t.target_column));
  }
  if (data.rows.size() < 2) problems.push_back("data needs at least two rows");
  if (auto id = data.column(t.id_column)) {
    std::set<std::string> seen;
    for (const auto& row : data.rows) {
      if (*id < row.size() && !seen.insert(row[*id]).second) {
        problems.push_back(fmt::format("duplicate id '{}'", row[*id]));
        break;
      }
    }
  }
  return problems;
}

// ---- exploration structure ----------------------------------------------------

std::vector<NodeId> select_parents(const ExplorationGraph& graph, const Plan& plan) {
  switch (plan.stage) {
    case Stage::Draft:
      return {};
    case Stage::Improve: {
      if (!plan.target_branch) throw InvalidArgument("an improve step needs a target branch");
      const auto best = branch_best(graph, *plan.target_branch);
      if (!best) throw NoViableParent(*plan.target_branch);
      return {best->id};
    }
    case Stage::Merge: {
      std::set<NodeId> ids;
      for (BranchId b : graph.regular_branches()) {
        if (auto best = branch_best(graph, b)) ids.insert(best->id);
      }
      if (auto best = global_best(graph)) ids.insert(best->id);
      return {ids.begin(), ids.end()};
    }
  }
  return {};
}

bool trails_by_margin(const ScoreRecord& candidate, const ScoreRecord& best, double margin) {
  const double gap = best.higher_is_better ? best.value - candidate.value : candidate.value - best.value;
  return gap > margin * std::abs(best.value);
}

std::set<BranchId> prune_branches(const ExplorationGraph& graph, PruneState& state, const PruneConfig& config) {
  std::map<BranchId, Node> bests;
  for (BranchId b : graph.regular_branches()) {
    if (auto best = branch_best(graph, b)) bests.emplace(b, *best);
  }
  const auto global = global_best(graph);
  if (bests.size() < 2 || !global) {
    state.trailing.clear();
    return state.pruned;
  }
  BranchId leader = bests.begin()->first;
  for (const auto& [b, n] : bests) {
    if (node_better(n, bests.at(leader))) leader = b;
  }
  for (const auto& [b, n] : bests) {
    if (state.pruned.count(b)) continue;
    if (b != leader && trails_by_margin(*n.score, *global->score, config.margin)) {
      if (++state.trailing[b] >= config.patience) state.pruned.insert(b);
    } else {
      state.trailing.erase(b);
    }
  }
  return state.pruned;
}

// ---- components -----------------------------------------------------------------

Components build_components(const RunConfig& config, const TaskDefinition& task) {
  Components c;
  switch (config.backend.kind) {
    case BackendKind::Synthetic:
      if (!task.synthetic) throw ConfigError("the synthetic backend only serves synthetic tasks");
      c.backend = std::make_unique<SyntheticBackend>(*task.synthetic);
      break;
    case BackendKind::Scripted:
      if (!config.backend.fixtures_dir) throw ConfigError("the scripted backend needs backend.fixtures_dir");
      c.backend = ScriptedBackend::from_directory(*config.backend.fixtures_dir);
      break;
    case BackendKind::Http:
      c.backend = std::make_unique<HttpChatBackend>(config.backend.http);
      break;
  }
  if (config.backend.http_embeddings && config.backend.kind == BackendKind::Http) {
    c.embedder = std::make_unique<HttpEmbedder>(config.backend.http);
  } else {
    c.embedder = std::make_unique<HashedEmbedder>();
  }
  if (task.synthetic) {
    c.executor = std::make_unique<SyntheticExecutor>(*task.synthetic);
  } else {
    c.executor = std::make_unique<ProcessExecutor>();
  }
  return c;
}

void force_offline(RunConfig& config, const TaskDefinition& task) {
  config.backend.http_embeddings = false;
  if (config.backend.kind != BackendKind::Http) return;
  if (task.synthetic) {
    config.backend.kind = BackendKind::Synthetic;
  } else if (config.backend.fixtures_dir) {
    config.backend.kind = BackendKind::Scripted;
  } else {
    throw ConfigError("offline mode needs a synthetic task or backend.fixtures_dir");
  }
}

// ---- the loop -------------------------------------------------------------------

namespace {

enum class SlotKind { Root, Improve, Merge, MergeImprove };

std::string_view to_string(SlotKind k) {
  switch (k) {
    case SlotKind::Root: return "root";
    case SlotKind::Improve: return "improve";
    case SlotKind::Merge: return "merge";
    case SlotKind::MergeImprove: return "merge_improve";
  }
  return "unknown";
}

struct Slot {
  int index = 0;
  SlotKind kind = SlotKind::Root;
  BranchId branch = 1;
  std::vector<NodeId> parents;
  Plan plan;
};

struct SlotResult {
  Node node;
  std::vector<TraceEvent> events;
  std::exception_ptr fatal;
};

json plan_json(const Plan& p) {
  return json{{"stage", std::string(to_string(p.stage))},
              {"allow_ensemble", p.allow_ensemble},
              {"allow_cross_validation", p.allow_cross_validation},
              {"novelty_bias", p.novelty_bias},
              {"per_execution_cap_s", p.per_execution_cap_s},
              {"debug_sample_fraction", p.debug_sample_fraction},
              {"elapsed_s", p.elapsed_s},
              {"budget_s", p.budget_s},
              {"target_branch", p.target_branch ? json(*p.target_branch) : json(nullptr)}};
}

json prune_json(const PruneState& s) {
  json trailing = json::object();
  for (const auto& [b, n] : s.trailing) trailing[std::to_string(b)] = n;
  return json{{"pruned", std::vector<BranchId>(s.pruned.begin(), s.pruned.end())}, {"trailing", trailing}};
}

PruneState prune_from_json(const json& j) {
  PruneState s;
  const auto p = j.at("pruned").get<std::vector<BranchId>>();
  s.pruned = {p.begin(), p.end()};
  for (const auto& [k, v] : j.at("trailing").items()) s.trailing[std::stoi(k)] = v.get<int>();
  return s;
}

std::string score_text(const Node& n) { return n.score ? fmt::format("{}", n.score->value) : "none"; }

class Runner {
 public:
  Runner(RunConfig config, TaskDefinition task, Components components, fs::path run_dir)
      : cfg_(std::move(config)),
        task_(std::move(task)),
        comps_(std::move(components)),
        run_dir_(std::move(run_dir)),
        prompts_(cfg_.prompts_dir),
        start_(std::chrono::steady_clock::now()) {
    cfg_.planner.draft_branches = std::min(cfg_.planner.draft_branches, cfg_.branch_count);
    serial_ = dynamic_cast<ScriptedBackend*>(comps_.backend.get()) != nullptr;
  }

  void start_fresh();
  void resume_from(const std::vector<TraceLine>& kept, const json& run_doc);
  void explore();
  RunResult finish();

 private:
  double elapsed() const;
  double committed_clock(std::size_t nodes_after) const;
  std::vector<Slot> assign(const Plan& base, long round, int launches);
  SlotResult run_slot(const Slot& slot, long round) const;
  std::string describe_parents(const Slot& slot) const;
  void grade(Node& node, const CodingOutcome& outcome, EventBuffer& events) const;
  void write_events(const std::vector<TraceEvent>& events) {
    for (const auto& e : events) writer_->write(e);
  }

  RunConfig cfg_;
  TaskDefinition task_;
  Components comps_;
  fs::path run_dir_;
  PromptLibrary prompts_;
  TaskSpec spec_;
  SplitManifest manifest_;
  std::unique_ptr<TraceWriter> writer_;
  ExplorationGraph graph_;
  PruneState prune_;
  std::chrono::steady_clock::time_point start_;
  double clock_offset_s_ = 0.0;  // wall clock carried over from before a resume
  double simulated_s_ = 0.0;
  long next_round_ = 0;
  bool serial_ = false;
  bool stopped_early_ = false;
};

double Runner::elapsed() const {
  switch (cfg_.clock) {
    case ClockMode::Wall:
      return clock_offset_s_ +
             std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    case ClockMode::Simulated:
      return simulated_s_;
    case ClockMode::Loop:
      return static_cast<double>(graph_.nodes().size()) * cfg_.loop_tick_s;
  }
  return 0.0;
}

double Runner::committed_clock(std::size_t nodes_after) const {
  if (cfg_.clock == ClockMode::Loop) return static_cast<double>(nodes_after) * cfg_.loop_tick_s;
  return elapsed();
}

void Runner::start_fresh() {
  fs::create_directories(run_dir_);
  writer_ = std::make_unique<TraceWriter>(run_dir_ / kTraceFile);

  SplitOptions so;
  so.source_file = task_.data_file;
  so.out_dir = run_dir_ / "split";
  so.id_column = task_.id_column;
  so.target_column = task_.target_column;
  so.train_fraction = cfg_.eval.train_fraction;
  so.seed = cfg_.seed;
  manifest_ = prepare_splits(so);
  save_manifest(manifest_, run_dir_ / "split" / "manifest.json");

  if (task_.analysis) {
    spec_ = *task_.analysis;
  } else {
    EventBuffer events(-1, -1);
    PromptSession session(*comps_.backend, "setup", 0, cfg_.backend.defaults, &events);
    const auto reply = session.ask(steps::kTaskAnalysis,
                                   prompts_.render(steps::kTaskAnalysis, {{"description", task_.description}}));
    write_events(events.take());
    try {
      spec_ = parse_task_analysis(reply.text);
    } catch (const Error& e) {
      throw UnparseableResponse(std::string(steps::kTaskAnalysis), reply.text);
    }
  }
  spec_.workspace_root = run_dir_ / "workspaces";

  json run_doc{{"config", config_to_json(cfg_)},
               {"task_dir", task_.dir.string()},
               {"task", spec_},
               {"created_at", graph_.created_at()}};
  write_file(run_dir_ / kRunFile, run_doc.dump(2) + "\n");
}

void Runner::resume_from(const std::vector<TraceLine>& kept, const json& run_doc) {
  writer_ = std::make_unique<TraceWriter>(run_dir_ / kTraceFile);
  manifest_ = load_manifest(run_dir_ / "split" / "manifest.json");
  spec_ = run_doc.at("task").get<TaskSpec>();
  spec_.workspace_root = run_dir_ / "workspaces";
  graph_ = replay_graph(kept);
  graph_.set_created_at(run_doc.at("created_at").get<std::string>());
  for (const auto& l : kept) {
    const TraceEvent& e = l.event;
    if (e.kind == EventKind::LoopStart) {
      prune_ = prune_from_json(e.payload.at("prune"));
      next_round_ = e.round + 1;
    } else if (e.kind == EventKind::NodeCommitted) {
      const double c = e.payload.at("clock_after_s").get<double>();
      clock_offset_s_ = c;
      simulated_s_ = c;
    }
  }
  graph_.set_pruned(prune_.pruned);
  if (auto* scripted = dynamic_cast<ScriptedBackend*>(comps_.backend.get())) {
    std::map<std::pair<std::string, int>, std::size_t> used;
    for (const auto& l : kept) {
      if (l.event.kind != EventKind::BackendCall) continue;
      ++used[{l.event.payload.at("step").get<std::string>(), l.event.payload.at("stream").get<int>()}];
    }
    for (const auto& [key, n] : used) scripted->set_cursor(key.first, key.second, n);
  }
  start_ = std::chrono::steady_clock::now();
}

std::vector<Slot> Runner::assign(const Plan& base, long round, int launches) {
  std::vector<Slot> slots;
  const auto want = static_cast<std::size_t>(launches);
  auto push = [&](SlotKind kind, BranchId b, std::vector<NodeId> parents, Stage stage) {
    Slot s;
    s.index = static_cast<int>(slots.size());
    s.kind = kind;
    s.branch = b;
    s.parents = std::move(parents);
    s.plan = base;
    s.plan.stage = stage;
    s.plan.target_branch = b;
    slots.push_back(std::move(s));
  };
  auto has_executed = [&](BranchId b) { return branch_best(graph_, b).has_value(); };
  const std::vector<BranchId> regular = graph_.regular_branches();
  BranchId fresh = graph_.next_branch_id();

  if (base.stage == Stage::Draft) {
    // First-layer diversity: new roots until the configured number exists,
    // then branches whose roots all failed are drafted again.
    int roots = root_count(graph_);
    while (slots.size() < want && roots < cfg_.branch_count) {
      push(SlotKind::Root, fresh++, {}, Stage::Draft);
      ++roots;
    }
    for (BranchId b : regular) {
      if (slots.size() < want && !prune_.pruned.count(b) && !has_executed(b)) push(SlotKind::Root, b, {}, Stage::Draft);
    }
  } else {
    for (BranchId b : regular) {
      if (prune_.pruned.count(b)) continue;
      Plan probe = base;
      probe.stage = Stage::Improve;
      probe.target_branch = b;
      try {
        select_parents(graph_, probe);
      } catch (const NoViableParent&) {
        prune_.pruned.insert(b);
      }
    }
    int executed_branches = 0;
    for (BranchId b : regular) executed_branches += has_executed(b) ? 1 : 0;
    if (base.stage == Stage::Merge && executed_branches >= 2 && want > 0) {
      const Node* latest = graph_.frontier(kMergeBranch);
      bool has_child = false;
      if (latest) {
        for (const auto& [id, n] : graph_.nodes()) {
          if (std::find(n.parent_ids.begin(), n.parent_ids.end(), latest->id) != n.parent_ids.end()) {
            has_child = true;
            break;
          }
        }
      }
      // A merged node gets at most one improve pass before the next merge.
      if (latest && latest->executed() && !has_child) {
        push(SlotKind::MergeImprove, kMergeBranch, {latest->id}, Stage::Improve);
      } else {
        push(SlotKind::Merge, kMergeBranch, select_parents(graph_, base), Stage::Merge);
      }
    }
  }

  std::vector<BranchId> viable;
  for (BranchId b : regular) {
    if (!prune_.pruned.count(b) && has_executed(b)) viable.push_back(b);
  }
  if (slots.size() < want && !viable.empty()) {
    const std::size_t offset = static_cast<std::size_t>(round) * want % viable.size();
    for (std::size_t k = 0; slots.size() < want; ++k) {
      const BranchId b = viable[(offset + k) % viable.size()];
      push(SlotKind::Improve, b, {branch_best(graph_, b)->id}, base.stage == Stage::Merge ? Stage::Improve : base.stage);
    }
  }
  if (slots.size() < want) {
    // Nothing to improve: redraft unexecuted branches, or open new ones.
    std::vector<BranchId> open;
    for (BranchId b : regular) {
      if (!prune_.pruned.count(b) && !has_executed(b)) open.push_back(b);
    }
    for (std::size_t k = 0; slots.size() < want; ++k) {
      push(SlotKind::Root, open.empty() ? fresh++ : open[k % open.size()], {}, Stage::Draft);
    }
  }
  return slots;
}

std::string Runner::describe_parents(const Slot& slot) const {
  if (slot.parents.empty()) {
    std::string text = fmt::format("No solution exists yet. Task: {}", spec_.brief_description);
    if (const Node* last = graph_.has_branch(slot.branch) ? graph_.frontier(slot.branch) : nullptr) {
      text += fmt::format("\nA previous attempt on this branch failed: {}", last->feedback);
    }
    return text;
  }
  std::string text;
  for (NodeId id : slot.parents) {
    const Node& n = graph_.node(id);
    text += fmt::format("Parent node {} (validation {}): {}\n", n.id, score_text(n), n.hypothesis.text);
  }
  if (const Node* last = graph_.frontier(slot.branch); last && !last->executed()) {
    text += fmt::format("Latest attempt on this branch failed: {}\n", last->feedback);
  }
  return text;
}

void Runner::grade(Node& node, const CodingOutcome& outcome, EventBuffer& events) const {
  if (!outcome.ok()) {
    node.status = NodeStatus::Failed;
    node.feedback = outcome.feedback;
    events.emit(EventKind::Grade, {{"status", "not_graded"}, {"reason", outcome.feedback}});
    return;
  }
  const auto& full = *outcome.full_run;
  const auto violations = validate_submission(*full.submission_path, manifest_.sample_submission(),
                                              manifest_.id_column);
  if (!violations.empty()) {
    node.status = NodeStatus::Failed;
    node.feedback = "invalid submission: " + fmt::format("{}", fmt::join(violations, "; "));
    events.emit(EventKind::Grade, {{"status", "invalid"}, {"violations", violations}});
    return;
  }
  const auto value = parse_validation_score(full.stdout_tail);
  if (!value) {
    node.status = NodeStatus::Failed;
    node.feedback = "the full run printed no validation_score line";
    events.emit(EventKind::Grade, {{"status", "no_score"}});
    return;
  }
  node.score = make_score(*value, spec_, ScoreSource::Validation);
  node.status = NodeStatus::Executed;
  node.feedback = outcome.feedback.empty() ? fmt::format("validation {} = {}", spec_.metric_name, *value)
                                           : outcome.feedback;
  events.emit(EventKind::Grade, {{"status", "executed"}, {"score", *node.score}});
}

SlotResult Runner::run_slot(const Slot& slot, long round) const {
  SlotResult out;
  EventBuffer events(round, slot.branch);
  Node node;
  node.parent_ids = slot.parents;
  node.branch_id = slot.branch;
  node.round = round;
  node.status = NodeStatus::Failed;
  try {
    PromptSession session(*comps_.backend, fmt::format("r{:04d}/b{}/s{}", round, slot.branch, slot.index),
                          slot.branch, cfg_.backend.defaults, &events);
    const ReasoningContext ctx{spec_, session, prompts_, comps_.embedder.get()};
    json plan_ev = plan_json(slot.plan);
    plan_ev["parents"] = slot.parents;
    events.emit(EventKind::Plan, plan_ev);
    if (slot.kind == SlotKind::Merge) events.emit(EventKind::Merge, {{"parents", slot.parents}});

    const std::string context = describe_parents(slot);
    const auto problems = identify_problems(context, ctx);
    const auto hypotheses = generate_hypotheses(problems, slot.plan, context, ctx, cfg_.hypotheses_per_loop);

    Rng rng(derive_seed(cfg_.seed, {fnv1a("kernel"), static_cast<std::uint64_t>(slot.branch),
                                    static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(slot.index)}));
    // New roots see only their own proposals, which keeps the first layer diverse.
    const bool collaborative = cfg_.collaborative && slot.kind != SlotKind::Root;
    const CandidatePool pool = build_candidate_pool(hypotheses, graph_, slot.branch, cfg_.kernel, rng, collaborative);
    json draws = json::array();
    for (const auto& d : pool.draws) {
      draws.push_back({{"node", d.node},
                       {"similarity", d.similarity},
                       {"delta", d.delta},
                       {"potential", d.potential},
                       {"probability", d.probability}});
    }
    events.emit(EventKind::Pool, {{"current", pool.current.size()},
                                  {"best_node", pool.best_node ? json(*pool.best_node) : json(nullptr)},
                                  {"sampled_nodes", pool.sampled_nodes},
                                  {"draws", draws},
                                  {"collaborative", collaborative},
                                  {"no_eligible_history", pool.no_eligible_history}});

    const auto entries = flatten(pool, graph_);
    SotaComparison sota;
    if (graph_.has_branch(slot.branch)) {
      if (auto b = branch_best(graph_, slot.branch)) sota.branch_best = b->score;
    }
    if (auto g = global_best(graph_)) sota.global_best = g->score;
    const SelectionOutcome sel =
        cfg_.backend_selection ? select_hypothesis(entries, slot.plan, sota, ctx) : offline_select(entries);
    events.emit(EventKind::Selection, {{"action", std::string(to_string(sel.action))},
                                       {"sources", sel.source_refs},
                                       {"downgraded", sel.downgraded},
                                       {"behind", sota.behind()},
                                       {"hypothesis", sel.hypothesis.text}});
    node.hypothesis = sel.hypothesis;

    std::optional<std::string> parent_code;
    if (!slot.parents.empty()) {
      const Node* base = &graph_.node(slot.parents.front());
      for (NodeId id : slot.parents) {
        const Node& n = graph_.node(id);
        if (node_better(n, *base)) base = &n;
      }
      parent_code = base->code;
    }
    const Workspace ws = Workspace::create(
        run_dir_ / "workspaces" / fmt::format("r{:04d}_s{}_b{}", round, slot.index, slot.branch),
        manifest_.public_dir);
    node.workspace = ws.root.string();
    const CodingOutcome co = coding_loop(node.hypothesis, parent_code, spec_, slot.plan, *comps_.executor, session,
                                         prompts_, ws, slot.plan.remaining_s(), cfg_.dev);
    node.code = co.code;
    node.debug_attempts = co.debug_attempts;
    node.debug_time_s = co.debug_time_s;
    node.full_time_s = co.full_time_s;
    node.wall_time_s = co.debug_time_s + co.full_time_s;
    grade(node, co, events);
  } catch (const FixtureExhausted&) {
    out.fatal = std::current_exception();
  } catch (const ConfigError&) {
    out.fatal = std::current_exception();
  } catch (const Error& e) {
    // Loop-level failures become failed nodes.
    node.status = NodeStatus::Failed;
    node.score.reset();
    node.feedback = e.what();
    events.emit(EventKind::Grade, {{"status", "loop_error"}, {"reason", e.what()}});
  } catch (...) {
    out.fatal = std::current_exception();
  }
  if (node.hypothesis.text.empty()) node.hypothesis.text = "(no hypothesis selected)";
  out.node = std::move(node);
  out.events = events.take();
  return out;
}

void Runner::explore() {
  const double budget = cfg_.budget_s;
  while (!stopped_early_) {
    const double now = elapsed();
    if (now >= budget) break;
    long launches = cfg_.worker_count;
    if (cfg_.max_loops > 0) {
      const long left = cfg_.max_loops - static_cast<long>(graph_.nodes().size());
      if (left <= 0) break;
      launches = std::min(launches, left);
    }
    const long round = next_round_;
    const Plan base = make_plan(now, budget, graph_, cfg_.planner);
    if (cfg_.prune.enabled) prune_branches(graph_, prune_, cfg_.prune);
    std::vector<Slot> slots = assign(base, round, static_cast<int>(launches));
    graph_.set_pruned(prune_.pruned);

    std::vector<SlotResult> results(slots.size());
    if (serial_ || slots.size() == 1) {
      for (std::size_t i = 0; i < slots.size(); ++i) results[i] = run_slot(slots[i], round);
    } else {
      std::vector<std::future<SlotResult>> futures;
      for (std::size_t i = 0; i < slots.size(); ++i) {
        futures.push_back(std::async(std::launch::async, [this, &slots, i, round] { return run_slot(slots[i], round); }));
      }
      for (std::size_t i = 0; i < slots.size(); ++i) results[i] = futures[i].get();
    }

    std::exception_ptr fatal;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (results[i].fatal) {
        if (!fatal) fatal = results[i].fatal;
      } else {
        keep.push_back(i);
      }
    }
    // A simulated round ends when its slowest slot does.
    if (cfg_.clock == ClockMode::Simulated && !keep.empty()) {
      double longest = 0.0;
      for (std::size_t i : keep) longest = std::max(longest, results[i].node.wall_time_s);
      simulated_s_ += longest + cfg_.round_overhead_s;
    }

    json head{{"round_size", keep.size()},
              {"elapsed_s", now},
              {"stage", std::string(to_string(base.stage))},
              {"prune", prune_json(prune_)}};
    for (std::size_t k = 0; k < keep.size(); ++k) {
      const Slot& slot = slots[keep[k]];
      SlotResult& r = results[keep[k]];
      json start = head;
      start["slot"] = k;
      start["kind"] = std::string(to_string(slot.kind));
      writer_->write(TraceEvent{utc_timestamp(), EventKind::LoopStart, round, slot.branch, start});
      write_events(r.events);
      r.node.committed_elapsed_s = committed_clock(graph_.nodes().size() + 1);
      const Node& c = graph_.commit(std::move(r.node));
      writer_->write(TraceEvent{utc_timestamp(),
                                EventKind::NodeCommitted,
                                round,
                                c.branch_id,
                                {{"node", c},
                                 {"clock_after_s", c.committed_elapsed_s},
                                 {"pruned", std::vector<BranchId>(prune_.pruned.begin(), prune_.pruned.end())}}});
      if (cfg_.crash_after_loops > 0 && static_cast<long>(graph_.nodes().size()) == cfg_.crash_after_loops) {
        std::cerr << fmt::format("crash hook: terminating after {} committed loops\n", cfg_.crash_after_loops);
        std::_Exit(kCrashExitCode);
      }
    }
    next_round_ = round + 1;
    if (fatal) {
      try {
        std::rethrow_exception(fatal);
      } catch (const FixtureExhausted& e) {
        std::cerr << "exploration stopped: " << e.what() << "\n";
        stopped_early_ = true;
      }
    }
  }
}

RunResult Runner::finish() {
  RunResult result;
  result.run_dir = run_dir_;
  result.rounds = next_round_;
  result.stopped_early = stopped_early_;

  std::unique_ptr<Executor> grader_exec;
  std::unique_ptr<Grader> grader;
  if (cfg_.eval.grader_command) {
    grader_exec = std::make_unique<ProcessExecutor>();
    grader = std::make_unique<CommandGrader>(*cfg_.eval.grader_command, spec_.metric_name, run_dir_ / "grading",
                                             *grader_exec);
  } else {
    grader = std::make_unique<AccuracyGrader>();
  }
  EvalContext ectx{spec_, manifest_, *comps_.executor, *grader, cfg_.dev, cfg_.planner.execution_cap_s, run_dir_,
                   cfg_.eval.rerun, cfg_.worker_count};

  EventBuffer events(next_round_, -1);
  PromptSession session(*comps_.backend, "final", 0, cfg_.backend.defaults, &events);
  try {
    FinalSelection sel = final_submit(graph_, ectx, cfg_.backend_selection ? &session : nullptr, prompts_,
                                      run_dir_ / "final", cfg_.eval.candidate_limit);
    json ranking = json::array();
    for (const auto& rc : sel.ranking) {
      ranking.push_back({{"node", rc.node.id},
                         {"validation", rc.node.score ? json(*rc.node.score) : json(nullptr)},
                         {"holdout", rc.grade ? json(make_score(rc.grade->score, spec_, ScoreSource::Holdout))
                                              : json(nullptr)},
                         {"failure", rc.failure}});
    }
    events.emit(EventKind::FinalSubmit, {{"node", sel.node.id},
                                         {"holdout", make_score(sel.grade.score, spec_, ScoreSource::Holdout)},
                                         {"ranking", ranking},
                                         {"submission", sel.submission.string()}});
    result.final = std::move(sel);
  } catch (const AllCandidatesFailed& e) {
    result.final_error = e.what();
    events.emit(EventKind::FinalSubmit, {{"node", nullptr}, {"error", e.what()}});
  } catch (const FixtureExhausted& e) {
    result.final_error = e.what();
    events.emit(EventKind::FinalSubmit, {{"node", nullptr}, {"error", e.what()}});
  }
  write_events(events.take());
  writer_->sync();

  result.report = build_report(read_trace(run_dir_ / kTraceFile));
  write_file(run_dir_ / "report.json", result.report.dump(2) + "\n");
  result.graph = graph_;
  return result;
}

fs::path new_run_dir(const RunConfig& config, const TaskDefinition& task) {
  fs::path base = fs::absolute(config.runs_dir);
  std::string name;
  if (config.run_name) {
    name = *config.run_name;
  } else {
    std::string ts = utc_timestamp();
    ts.erase(std::remove_if(ts.begin(), ts.end(), [](char c) { return c == ':' || c == '-'; }), ts.end());
    name = fmt::format("{}-s{}-{}", task.dir.filename().string(), config.seed, ts);
  }
  fs::path dir = base / name;
  for (int k = 1; fs::exists(dir); ++k) dir = base / fmt::format("{}-{}", name, k);
  return dir;
}

}  // namespace

RunResult run(const fs::path& task_dir, const RunConfig& config, std::optional<Components> components) {
  config.validate();
  TaskDefinition task = load_task(task_dir);
  Components comps = components ? std::move(*components) : build_components(config, task);
  const fs::path run_dir = new_run_dir(config, task);
  Runner runner(config, std::move(task), std::move(comps), run_dir);
  runner.start_fresh();
  runner.explore();
  return runner.finish();
}

RunResult resume(const fs::path& trace_path, std::optional<Components> components) {
  const fs::path run_dir = fs::absolute(trace_path).parent_path();
  const json run_doc = read_json_file(run_dir / kRunFile);
  RunConfig config = config_from_json(run_doc.at("config"));
  config.crash_after_loops = 0;
  TaskDefinition task = load_task(run_doc.at("task_dir").get<std::string>());

  std::vector<TraceLine> lines = read_trace(trace_path);
  // Keep whole rounds only: a round interrupted part-way is redone.
  long last_round = -1;
  std::map<long, std::pair<long, long>> rounds;  // round -> (expected, committed)
  bool finished = false;
  for (const auto& l : lines) {
    const TraceEvent& e = l.event;
    if (e.kind == EventKind::LoopStart) {
      rounds[e.round].first = e.payload.at("round_size").get<long>();
      last_round = std::max(last_round, e.round);
    } else if (e.kind == EventKind::NodeCommitted) {
      ++rounds[e.round].second;
    } else if (e.kind == EventKind::FinalSubmit && e.payload.contains("node")) {
      finished = true;
    }
  }
  if (finished) throw ConfigError(fmt::format("the run in {} already finished", run_dir.string()));
  std::size_t cut = lines.size();
  if (last_round >= 0 && rounds[last_round].second < rounds[last_round].first) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].event.round == last_round) {
        cut = i;
        break;
      }
    }
  }
  if (cut < lines.size()) {
    truncate_trace(trace_path, cut == 0 ? 0 : lines[cut - 1].end_offset);
    lines.resize(cut);
  }

  Components comps = components ? std::move(*components) : build_components(config, task);
  Runner runner(config, std::move(task), std::move(comps), run_dir);
  runner.resume_from(lines, run_doc);
  runner.explore();
  return runner.finish();
}

}  // namespace mlagent
