#include "mlagent/reasoning.hpp"

#include <algorithm>
#include <charconv>
#include <functional>

#include <fmt/format.h>

#include "mlagent/errors.hpp"
#include "mlagent/structured_response.hpp"

namespace mlagent {

std::string_view to_string(ProblemCategory c) {
  switch (c) {
    case ProblemCategory::DataRelated: return "DataRelated";
    case ProblemCategory::ModelRelated: return "ModelRelated";
    case ProblemCategory::EvaluationRelated: return "EvaluationRelated";
    case ProblemCategory::ImplementationRelated: return "ImplementationRelated";
  }
  return "unknown";
}

std::optional<ProblemCategory> parse_problem_category(std::string_view s) {
  for (auto c : {ProblemCategory::DataRelated, ProblemCategory::ModelRelated, ProblemCategory::EvaluationRelated,
                 ProblemCategory::ImplementationRelated}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::string_view to_string(SelectionAction a) {
  switch (a) {
    case SelectionAction::Select: return "Select";
    case SelectionAction::Modify: return "Modify";
    case SelectionAction::Create: return "Create";
  }
  return "unknown";
}

bool SotaComparison::behind() const {
  if (!global_best) return false;
  if (!branch_best) return true;
  return compare_scores(*branch_best, *global_best) != Ordering::ABetter;
}

std::string_view stage_guidance(Stage stage) {
  switch (stage) {
    case Stage::Draft: return directives::kDraftGuidance;
    case Stage::Improve: return directives::kImproveGuidance;
    case Stage::Merge: return directives::kMergeGuidance;
  }
  return {};
}

std::string direction_text(const TaskSpec& task) {
  return task.higher_is_better ? "higher is better" : "lower is better";
}

namespace {

PromptVars task_vars(const TaskSpec& task) {
  return {{"task_type", task.task_type},
          {"data_type", task.data_type},
          {"brief_description", task.brief_description},
          {"metric_name", task.metric_name},
          {"metric_direction", direction_text(task)}};
}

std::optional<int> parse_int(const std::string& s) {
  int v = 0;
  const auto t = trim(s);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return v;
}

// Runs one structured step with a single reprompt. `parse` returns nullopt (or
// throws nothing) for malformed replies and fills `why`.
template <typename T>
T ask_structured(const ReasoningContext& ctx, std::string_view step, const std::string& prompt,
                 const std::function<std::optional<T>(const std::string&, std::string&)>& parse) {
  std::string why;
  std::string text = ctx.session.ask(step, prompt).text;
  if (auto v = parse(text, why)) return std::move(*v);
  const std::string retry = prompt + fmt::format(
                                         "\n\nYour previous reply could not be used ({}). Reply again using exactly "
                                         "the requested ```kv format.\n",
                                         why);
  text = ctx.session.ask(step, retry).text;
  if (auto v = parse(text, why)) return std::move(*v);
  throw UnparseableResponse(std::string(step), text);
}

std::optional<DimScores> parse_scores(const KvRecord& r, std::string& why) {
  DimScores s;
  const std::pair<const char*, int*> fields[] = {{"alignment", &s.alignment},
                                                 {"impact", &s.impact},
                                                 {"novelty", &s.novelty},
                                                 {"feasibility", &s.feasibility},
                                                 {"risk_reward", &s.risk_reward}};
  for (auto [key, dst] : fields) {
    auto it = r.find(key);
    if (it == r.end()) {
      why = fmt::format("missing score '{}'", key);
      return std::nullopt;
    }
    auto v = parse_int(it->second);
    if (!v || *v < 1 || *v > 10) {
      why = fmt::format("score '{}' = '{}' is not an integer in [1, 10]", key, it->second);
      return std::nullopt;
    }
    *dst = *v;
  }
  return s;
}

void attach_embedding(Hypothesis& h, Embedder* embedder) {
  if (embedder && !h.text.empty()) h.embedding = embedder->embed(h.text);
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string format_score(const std::optional<ScoreRecord>& s) {
  return s ? fmt::format("{:.6g}", s->value) : std::string("none");
}

}  // namespace

std::vector<Problem> identify_problems(const std::string& context, const ReasoningContext& ctx) {
  if (trim(context).empty()) throw InvalidArgument("problem identification needs a non-empty context");
  PromptVars vars = task_vars(ctx.task);
  vars["context"] = context;
  const std::string prompt = ctx.prompts.render(steps::kIdentifyProblems, vars);

  std::function<std::optional<std::vector<Problem>>(const std::string&, std::string&)> parse =
      [](const std::string& text, std::string& why) -> std::optional<std::vector<Problem>> {
    auto records = parse_kv_records(text);
    if (!records) {
      why = "no key/value records";
      return std::nullopt;
    }
    std::vector<Problem> out;
    for (const auto& r : *records) {
      auto p = r.find("problem");
      auto c = r.find("category");
      if (p == r.end() || p->second.empty() || c == r.end()) {
        why = "each record needs 'problem' and 'category'";
        return std::nullopt;
      }
      auto cat = parse_problem_category(c->second);
      if (!cat) {
        why = fmt::format("unknown category '{}'", c->second);
        return std::nullopt;
      }
      out.push_back({p->second, *cat});
    }
    if (out.size() > kMaxProblems) out.resize(kMaxProblems);
    return out;
  };
  return ask_structured(ctx, steps::kIdentifyProblems, prompt, parse);
}

std::vector<Hypothesis> generate_hypotheses(const std::vector<Problem>& problems, const Plan& plan,
                                            const std::string& pool_context, const ReasoningContext& ctx,
                                            int max_count) {
  if (problems.empty()) throw InvalidArgument("hypothesis generation needs at least one problem");
  if (max_count < 1) throw InvalidArgument("max_count must be >= 1");

  std::string problem_list;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    problem_list += fmt::format("{}. [{}] {}\n", i + 1, to_string(problems[i].category), problems[i].description);
  }
  std::string constraints;
  if (!plan.allow_ensemble) constraints += "Do not propose ensembles at this stage.\n";
  if (!plan.allow_cross_validation) constraints += "Do not propose cross-validation at this stage.\n";

  PromptVars vars = task_vars(ctx.task);
  vars["stage"] = std::string(to_string(plan.stage));
  vars["stage_guidance"] = std::string(stage_guidance(plan.stage));
  vars["novelty_bias"] = fmt::format("{:.2f}", plan.novelty_bias);
  vars["constraints"] = constraints;
  vars["problems"] = problem_list;
  vars["pool_context"] = pool_context.empty() ? "(no history yet)" : pool_context;
  vars["count"] = std::to_string(max_count);
  const std::string prompt = ctx.prompts.render(steps::kGenerateHypotheses, vars);

  const std::size_t n_problems = problems.size();
  std::function<std::optional<std::vector<Hypothesis>>(const std::string&, std::string&)> parse =
      [n_problems, max_count](const std::string& text, std::string& why) -> std::optional<std::vector<Hypothesis>> {
    auto records = parse_kv_records(text);
    if (!records) {
      why = "no key/value records";
      return std::nullopt;
    }
    std::vector<Hypothesis> out;
    for (const auto& r : *records) {
      Hypothesis h;
      auto t = r.find("hypothesis");
      if (t == r.end() || t->second.empty()) {
        why = "a record has no 'hypothesis'";
        return std::nullopt;
      }
      h.text = t->second;
      auto c = r.find("component");
      auto comp = c == r.end() ? std::nullopt : parse_component(c->second);
      if (!comp) {
        why = "a record has no valid 'component'";
        return std::nullopt;
      }
      h.component = *comp;
      auto p = r.find("problem");
      auto pn = p == r.end() ? std::nullopt : parse_int(p->second);
      if (!pn || *pn < 1 || static_cast<std::size_t>(*pn) > n_problems) {
        why = "a record has no valid 'problem' number";
        return std::nullopt;
      }
      h.problem_ref = fmt::format("P{}", *pn);
      auto scores = parse_scores(r, why);
      if (!scores) return std::nullopt;
      h.scores = *scores;
      h.origin = Origin::CurrentBranch;
      out.push_back(std::move(h));
    }
    if (out.size() > static_cast<std::size_t>(max_count)) out.resize(static_cast<std::size_t>(max_count));
    return out;
  };
  auto hyps = ask_structured(ctx, steps::kGenerateHypotheses, prompt, parse);
  for (auto& h : hyps) attach_embedding(h, ctx.embedder);
  return hyps;
}

std::string render_pool(const std::vector<PoolEntry>& pool) {
  std::string out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& e = pool[i];
    out += fmt::format("{}. [{}; {}; {}] {}\n", i + 1, to_string(e.hypothesis.origin), to_string(e.hypothesis.component),
                       e.hypothesis.problem_ref, e.hypothesis.text);
    const auto& s = e.hypothesis.scores;
    out += fmt::format("   scores: alignment={} impact={} novelty={} feasibility={} risk_reward={}", s.alignment,
                       s.impact, s.novelty, s.feasibility, s.risk_reward);
    if (e.score) out += fmt::format("; observed {}={:.6g}", e.score->metric_name, e.score->value);
    out += "\n";
  }
  return out;
}

SelectionOutcome select_hypothesis(const std::vector<PoolEntry>& pool, const Plan& plan, const SotaComparison& sota,
                                   const ReasoningContext& ctx) {
  if (pool.empty()) throw InvalidArgument("selection needs a non-empty candidate pool");

  std::string actions;
  switch (plan.stage) {
    case Stage::Draft:
      actions = "Select the most promising candidate, Modify one (hyperparameters, loss, augmentation), or Create "
                "one that combines candidates.";
      break;
    case Stage::Improve:
      actions = "Select the single most promising candidate, Modify it for faster iteration and larger gain, or "
                "Create one from the best parts of several candidates.";
      break;
    case Stage::Merge:
      actions = "Select complementary solutions from different traces, Modify a solution from another trace for "
                "this context, or Create a unified hypothesis that combines the traces.";
      break;
  }

  PromptVars vars = task_vars(ctx.task);
  vars["remaining"] = fmt::format("{:.0f}s", plan.remaining_s());
  vars["budget"] = fmt::format("{:.0f}s", plan.budget_s);
  vars["sota_summary"] = fmt::format("branch best {}, global best {}", format_score(sota.branch_best),
                                     format_score(sota.global_best));
  vars["priority_directive"] =
      std::string(sota.behind() ? directives::kPrioritizeShared : directives::kPrioritizeCurrent);
  vars["stage"] = std::string(to_string(plan.stage));
  vars["stage_guidance"] = std::string(stage_guidance(plan.stage));
  vars["stage_actions"] = actions;
  vars["novelty_bias"] = fmt::format("{:.2f}", plan.novelty_bias);
  vars["candidates"] = render_pool(pool);
  const std::string prompt = ctx.prompts.render(steps::kSelectHypothesis, vars);

  std::function<std::optional<SelectionOutcome>(const std::string&, std::string&)> parse =
      [&pool](const std::string& reply, std::string& why) -> std::optional<SelectionOutcome> {
    auto records = parse_kv_records(reply);
    if (!records) {
      why = "no key/value record";
      return std::nullopt;
    }
    const KvRecord& r = records->front();
    auto get = [&r](const char* k) -> std::string {
      auto it = r.find(k);
      return it == r.end() ? std::string() : it->second;
    };
    SelectionOutcome out;
    const std::string action = get("action");
    if (action == "Select") {
      out.action = SelectionAction::Select;
    } else if (action == "Modify") {
      out.action = SelectionAction::Modify;
    } else if (action == "Create") {
      out.action = SelectionAction::Create;
    } else {
      why = fmt::format("unknown action '{}'", action);
      return std::nullopt;
    }

    std::optional<std::size_t> candidate;
    if (auto c = parse_int(get("candidate")); c && *c >= 1 && static_cast<std::size_t>(*c) <= pool.size()) {
      candidate = static_cast<std::size_t>(*c - 1);
    }
    for (const auto& tok : tokenize(get("sources"))) {
      if (auto v = parse_int(tok); v && *v >= 1 && static_cast<std::size_t>(*v) <= pool.size()) {
        out.source_refs.push_back(static_cast<std::size_t>(*v - 1));
      }
    }
    const std::string text = get("hypothesis");

    if (out.action == SelectionAction::Select && !candidate) {
      // Unknown candidate: fall back to revising the nearest candidate by text.
      if (text.empty()) {
        why = "Select names no existing candidate";
        return std::nullopt;
      }
      std::size_t best = 0;
      std::size_t best_d = std::string::npos;
      for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto d = levenshtein(text, pool[i].hypothesis.text);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      out.action = SelectionAction::Modify;
      out.downgraded = true;
      candidate = best;
    }

    if (out.action == SelectionAction::Select) {
      out.hypothesis = pool[*candidate].hypothesis;
    } else {
      if (text.empty()) {
        why = fmt::format("{} requires a 'hypothesis' statement", to_string(out.action));
        return std::nullopt;
      }
      const Hypothesis* base = candidate ? &pool[*candidate].hypothesis
                               : !out.source_refs.empty() ? &pool[out.source_refs.front()].hypothesis
                                                           : nullptr;
      Hypothesis h;
      h.text = text;
      h.origin = out.action == SelectionAction::Modify ? Origin::Modified : Origin::Created;
      if (base) {
        h.component = base->component;
        h.problem_ref = base->problem_ref;
        h.scores = base->scores;
      }
      if (auto comp = parse_component(get("component"))) {
        h.component = *comp;
      } else if (!base) {
        why = "Create without sources needs a valid 'component'";
        return std::nullopt;
      }
      if (const std::string p = get("problem"); !p.empty()) h.problem_ref = p;
      if (h.problem_ref.empty()) {
        why = "the hypothesis has no problem reference";
        return std::nullopt;
      }
      std::string score_why;
      if (auto s = parse_scores(r, score_why)) h.scores = *s;
      out.hypothesis = std::move(h);
    }
    if (candidate && std::find(out.source_refs.begin(), out.source_refs.end(), *candidate) == out.source_refs.end()) {
      out.source_refs.insert(out.source_refs.begin(), *candidate);
    }
    return out;
  };
  SelectionOutcome outcome = ask_structured(ctx, steps::kSelectHypothesis, prompt, parse);
  if (outcome.action != SelectionAction::Select && !outcome.hypothesis.embedding) {
    attach_embedding(outcome.hypothesis, ctx.embedder);
  }
  return outcome;
}

double aggregate_dim_scores(const DimScores& scores, const std::array<double, 5>& weights) {
  double wsum = 0.0;
  double acc = 0.0;
  const auto v = scores.values();
  for (std::size_t i = 0; i < 5; ++i) {
    if (weights[i] < 0.0) throw InvalidArgument("aggregation weights must be non-negative");
    wsum += weights[i];
    acc += weights[i] * v[i];
  }
  if (wsum == 0.0) throw ZeroWeights();
  return acc / wsum;
}

SelectionOutcome offline_select(const std::vector<PoolEntry>& pool) {
  if (pool.empty()) throw InvalidArgument("selection needs a non-empty candidate pool");
  constexpr std::array<double, 5> equal{1, 1, 1, 1, 1};
  std::size_t best = 0;
  double best_v = aggregate_dim_scores(pool[0].hypothesis.scores, equal);
  for (std::size_t i = 1; i < pool.size(); ++i) {
    const double v = aggregate_dim_scores(pool[i].hypothesis.scores, equal);
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  SelectionOutcome out;
  out.action = SelectionAction::Select;
  out.hypothesis = pool[best].hypothesis;
  out.source_refs = {best};
  return out;
}

}  // namespace mlagent
