#include <algorithm>
#include <future>

#include <fmt/format.h>

#include "mlagent/errors.hpp"
#include "mlagent/eval.hpp"
#include "mlagent/json_io.hpp"
#include "mlagent/structured_response.hpp"

namespace fs = std::filesystem;

namespace mlagent {

std::vector<Node> collect_candidates(const std::vector<Node>& nodes, std::size_t k) {
  std::vector<Node> executed;
  for (const auto& n : nodes) {
    if (n.executed()) executed.push_back(n);
  }
  std::sort(executed.begin(), executed.end(), node_better);
  if (executed.size() > k) executed.resize(k);
  return executed;
}

std::vector<Node> final_candidates(const ExplorationGraph& graph) {
  std::map<NodeId, Node> picked;
  for (const auto& [b, ids] : graph.branches()) {
    if (auto best = branch_best(graph, b)) picked.emplace(best->id, *best);
  }
  if (auto best = global_best(graph)) picked.emplace(best->id, *best);
  std::vector<Node> out;
  for (auto& [id, n] : picked) out.push_back(std::move(n));
  return out;
}

namespace {

RankedCandidate reevaluate(const Node& node, const EvalContext& ctx) {
  RankedCandidate rc{node, std::nullopt, {}};
  try {
    fs::path submission;
    if (ctx.rerun) {
      const Workspace ws = Workspace::create(ctx.work_root / fmt::format("reeval_node{:04d}", node.id),
                                             ctx.manifest.public_dir);
      const ExecutionResult r = run_full(node.code, ws, ctx.executor, ctx.cap_s, ctx.task, ctx.dev);
      if (!r.exit_ok) {
        rc.failure = r.failure;
        return rc;
      }
      submission = *r.submission_path;
    } else {
      submission = fs::path(node.workspace) / "output" / "submission.csv";
    }
    const auto violations = validate_submission(submission, ctx.manifest.sample_submission(), ctx.manifest.id_column);
    if (!violations.empty()) {
      rc.failure = "invalid submission: " + violations.front();
      return rc;
    }
    rc.grade = ctx.grader.grade(submission, ctx.manifest);
  } catch (const Error& e) {
    rc.failure = e.what();
  }
  return rc;
}

// Successes by holdout score (ties: lower id), then failures by id.
bool ranked_before(const RankedCandidate& a, const RankedCandidate& b, bool higher_is_better) {
  if (a.grade.has_value() != b.grade.has_value()) return a.grade.has_value();
  if (a.grade && a.grade->score != b.grade->score) {
    return higher_is_better ? a.grade->score > b.grade->score : a.grade->score < b.grade->score;
  }
  return a.node.id < b.node.id;
}

}  // namespace

std::vector<RankedCandidate> validation_select(const std::vector<Node>& candidates, const EvalContext& ctx,
                                               std::size_t k) {
  const std::vector<Node> chosen = collect_candidates(candidates, k);
  if (chosen.empty()) throw AllCandidatesFailed();

  std::vector<RankedCandidate> ranked(chosen.size());
  const std::size_t width = static_cast<std::size_t>(std::max(1, ctx.workers));
  for (std::size_t start = 0; start < chosen.size(); start += width) {
    std::vector<std::future<RankedCandidate>> batch;
    const std::size_t end = std::min(chosen.size(), start + width);
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, [&, i] { return reevaluate(chosen[i], ctx); }));
    }
    for (std::size_t i = start; i < end; ++i) ranked[i] = batch[i - start].get();
  }
  const bool hib = ctx.task.higher_is_better;
  std::sort(ranked.begin(), ranked.end(),
            [hib](const RankedCandidate& a, const RankedCandidate& b) { return ranked_before(a, b, hib); });
  if (!ranked.front().grade) throw AllCandidatesFailed();
  return ranked;
}

std::size_t offline_sota(const std::vector<std::pair<Node, std::string>>& experiments) {
  if (experiments.empty()) throw EmptyInput("no experiments to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < experiments.size(); ++i) {
    const Node& a = experiments[i].first;
    const Node& b = experiments[best].first;
    if (a.executed() != b.executed()) {
      if (a.executed()) best = i;
      continue;
    }
    if (!a.executed()) continue;
    if (compare_scores(*a.score, *b.score) == Ordering::ABetter) best = i;
  }
  return best;
}

SotaChoice select_sota(const std::vector<std::pair<Node, std::string>>& experiments, const TaskSpec& task,
                       PromptSession* session, const PromptLibrary& prompts) {
  if (experiments.empty()) throw EmptyInput("no experiments to choose from");
  if (experiments.size() == 1) return {0, false};
  if (!session) return {offline_sota(experiments), true};

  std::string listing;
  for (std::size_t i = 0; i < experiments.size(); ++i) {
    const Node& n = experiments[i].first;
    listing += fmt::format("{}. node {} ({}): validation {} | {}\n", i, n.id, n.hypothesis.text,
                           n.score ? fmt::format("{:.6g}", n.score->value) : std::string("none"),
                           experiments[i].second);
  }
  PromptVars vars{{"metric_name", task.metric_name},
                  {"metric_direction", task.higher_is_better ? "higher is better" : "lower is better"},
                  {"experiments", listing}};
  const auto response = session->ask(steps::kSelectSota, prompts.render(steps::kSelectSota, vars));
  const std::string body = extract_fenced_block(response.text, "json").value_or(response.text);
  const auto open = body.find('{');
  const auto close = body.rfind('}');
  if (open != std::string::npos && close != std::string::npos && close > open) {
    try {
      const json j = json::parse(body.substr(open, close - open + 1));
      if (j.contains("selected_SOTA_idx")) {
        const json& v = j.at("selected_SOTA_idx");
        if (v.is_null()) return {std::nullopt, false};
        if (v.is_number_integer()) {
          const auto idx = v.get<long long>();
          if (idx >= 0 && static_cast<std::size_t>(idx) < experiments.size()) {
            return {static_cast<std::size_t>(idx), false};
          }
        }
      }
    } catch (const json::exception&) {
    }
  }
  if (auto* events = session->events()) {
    events->emit(EventKind::FinalSubmit, {{"note", "unusable SOTA selection reply; using best validation score"}});
  }
  return {offline_sota(experiments), true};
}

FinalSelection final_submit(const ExplorationGraph& graph, const EvalContext& ctx, PromptSession* session,
                            const PromptLibrary& prompts, const fs::path& final_dir, std::size_t k) {
  const auto candidates = final_candidates(graph);
  if (candidates.empty()) throw AllCandidatesFailed();
  auto ranking = validation_select(candidates, ctx, k);

  std::size_t pick = 0;
  std::vector<std::pair<Node, std::string>> tied;
  for (const auto& rc : ranking) {
    if (rc.grade && rc.grade->score == ranking.front().grade->score) tied.emplace_back(rc.node, rc.node.feedback);
  }
  if (tied.size() > 1) {
    const SotaChoice choice = select_sota(tied, ctx.task, session, prompts);
    if (choice.index) pick = *choice.index;
  }
  FinalSelection out{ranking[pick].node, *ranking[pick].grade, ranking, {}};

  fs::path source;
  if (ctx.rerun) {
    source = ctx.work_root / fmt::format("reeval_node{:04d}", out.node.id) / "output" / "submission.csv";
  } else {
    source = fs::path(out.node.workspace) / "output" / "submission.csv";
  }
  std::error_code ec;
  fs::create_directories(final_dir, ec);
  out.submission = final_dir / "submission.csv";
  fs::copy_file(source, out.submission, fs::copy_options::overwrite_existing, ec);
  if (ec) throw WriteFailure("cannot copy final submission: " + ec.message());
  return out;
}

}  // namespace mlagent
