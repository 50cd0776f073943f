#include "mlagent/dev_workflow.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mlagent/debug_block.hpp"
#include "mlagent/errors.hpp"
#include "mlagent/json_io.hpp"
#include "mlagent/rng.hpp"
#include "mlagent/structured_response.hpp"

namespace fs = std::filesystem;

namespace mlagent {

Workspace Workspace::create(const fs::path& root, const fs::path& public_data) {
  Workspace ws{root, root / "input", root / "output", root / "scratch"};
  std::error_code ec;
  fs::create_directories(ws.output_dir, ec);
  if (!ec) fs::create_directories(ws.scratch_dir, ec);
  if (ec) throw WriteFailure(fmt::format("cannot create workspace {}: {}", root.string(), ec.message()));
  if (!fs::exists(fs::symlink_status(ws.input_dir))) {
    fs::create_directory_symlink(fs::absolute(public_data), ws.input_dir, ec);
    if (ec) throw WriteFailure(fmt::format("cannot link input into {}: {}", root.string(), ec.message()));
  }
  return ws;
}

std::map<std::string, std::string> Workspace::environment() const {
  return {{"MLAGENT_INPUT_DIR", input_dir.string()},
          {"MLAGENT_OUTPUT_DIR", output_dir.string()},
          {"MLAGENT_SCRATCH_DIR", scratch_dir.string()},
          {"PYTHONDONTWRITEBYTECODE", "1"}};
}

std::vector<std::string> split_command(const std::string& command) {
  std::vector<std::string> out;
  std::istringstream in(command);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string plan_constraints(const Plan& plan) {
  std::string out;
  out += plan.allow_ensemble ? "- Ensembles are allowed.\n" : "- Do not use ensembling of multiple models.\n";
  out += plan.allow_cross_validation ? "- Cross-validation is allowed.\n" : "- Do not use cross-validation.\n";
  out += fmt::format("- The full run must finish within {:.0f} seconds.\n", plan.per_execution_cap_s);
  return out;
}

std::string code_digest(const std::string& code) { return fmt::format("{:016x}", fnv1a(code)); }

namespace {

void emit(PromptSession& session, EventKind kind, json payload) {
  if (auto* events = session.events()) events->emit(kind, std::move(payload));
}

void write_entry(const Workspace& ws, const std::string& code, const DevConfig& config) {
  const fs::path path = ws.root / config.entry_file;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << code;
  out.close();
  if (!out) throw WriteFailure("cannot write " + path.string());
}

ExecRequest make_request(const Workspace& ws, double cap_s, const TaskSpec& task, const DevConfig& config,
                         bool debug) {
  ExecRequest req;
  req.argv = split_command(task.entrypoint_command);
  if (req.argv.empty()) throw InvalidArgument("empty entrypoint command");
  if (debug) req.argv.push_back(config.debug_flag);
  req.workdir = ws.root;
  req.timeout_s = cap_s;
  req.env = ws.environment();
  req.debug = debug;
  return req;
}

std::string tail_lines(const std::string& text, std::size_t max_chars) {
  if (text.size() <= max_chars) return text;
  return "..." + text.substr(text.size() - max_chars);
}

json debug_json(const DebugReport& r) {
  return {{"exit_ok", r.exit_ok},         {"debug_time_s", r.debug_time_s}, {"estimated_time_s", r.estimated_time_s},
          {"wall_time_s", r.wall_time_s}, {"timed_out", r.timed_out},       {"failure", r.failure}};
}

}  // namespace

std::string draft_solution(const Hypothesis& hypothesis, const std::optional<std::string>& parent_code,
                           const TaskSpec& task, const Plan& plan, PromptSession& session,
                           const PromptLibrary& prompts, const DevConfig& config) {
  std::string parent_section;
  if (parent_code) {
    parent_section = fmt::format(
        "Start from the parent solution below and edit it; change only what the hypothesis requires.\n```\n{}\n```\n",
        *parent_code);
  }
  PromptVars vars{{"task_type", task.task_type},
                  {"data_type", task.data_type},
                  {"brief_description", task.brief_description},
                  {"metric_name", task.metric_name},
                  {"metric_direction", task.higher_is_better ? "higher is better" : "lower is better"},
                  {"component", std::string(to_string(hypothesis.component))},
                  {"hypothesis", hypothesis.text},
                  {"parent_section", parent_section},
                  {"constraints", plan_constraints(plan)},
                  {"debug_command", task.entrypoint_command + " " + config.debug_flag},
                  {"debug_percent", fmt::format("{:.0f}", plan.debug_sample_fraction * 100.0)},
                  {"cap", fmt::format("{:.0f}", plan.per_execution_cap_s)}};
  const auto response = session.ask(steps::kDraftSolution, prompts.render(steps::kDraftSolution, vars));
  return extract_code(response.text);
}

DebugReport run_debug(const std::string& code, const Workspace& workspace, Executor& executor, double cap_s,
                      const TaskSpec& task, const DevConfig& config) {
  if (!(cap_s > 0.0)) throw InvalidArgument("debug cap must be positive");
  write_entry(workspace, code, config);
  const ExecOutcome o = executor.execute(make_request(workspace, cap_s, task, config, true));
  DebugReport r;
  r.wall_time_s = o.wall_time_s;
  r.timed_out = o.timed_out;
  r.stdout_tail = o.stdout_tail;
  r.stderr_tail = o.stderr_tail;
  if (o.timed_out) {
    r.failure = fmt::format("{}: debug run exceeded {:.1f}s", kTimeoutMarker, cap_s);
    return r;
  }
  if (o.cancelled) {
    r.failure = "cancelled";
    return r;
  }
  if (o.exit_code != 0) {
    r.failure = fmt::format("debug run exited with status {}", o.exit_code);
    return r;
  }
  try {
    const DebugTimes t = parse_debug_block(o.stdout_tail);
    if (!(t.debug_time_s > 0.0) || !(t.estimated_time_s > 0.0)) {
      r.failure = "debug information block reports non-positive times";
      return r;
    }
    r.debug_time_s = t.debug_time_s;
    r.estimated_time_s = t.estimated_time_s;
    r.exit_ok = true;
  } catch (const DebugBlockError& e) {
    r.failure = e.what();
  }
  return r;
}

ExecutionResult run_full(const std::string& code, const Workspace& workspace, Executor& executor, double cap_s,
                         const TaskSpec& task, const DevConfig& config) {
  if (!(cap_s > 0.0)) throw InvalidArgument("execution cap must be positive");
  write_entry(workspace, code, config);
  // A submission left over from the debug run must not satisfy the full-run check.
  std::error_code ec;
  fs::remove(workspace.submission_path(), ec);
  const ExecOutcome o = executor.execute(make_request(workspace, cap_s, task, config, false));
  ExecutionResult r;
  r.wall_time_s = o.wall_time_s;
  r.timed_out = o.timed_out;
  r.stdout_tail = o.stdout_tail;
  r.stderr_tail = o.stderr_tail;
  if (o.timed_out) {
    r.failure = fmt::format("{}: full run exceeded {:.1f}s", kTimeoutMarker, cap_s);
  } else if (o.cancelled) {
    r.failure = "cancelled";
  } else if (o.exit_code != 0) {
    r.failure = fmt::format("full run exited with status {}", o.exit_code);
  } else if (!fs::is_regular_file(workspace.submission_path())) {
    r.failure = fmt::format("{}: no {} after a successful run", kMissingSubmission,
                            workspace.submission_path().filename().string());
  } else {
    r.exit_ok = true;
    r.submission_path = workspace.submission_path();
  }
  return r;
}

CodingOutcome coding_loop(const Hypothesis& hypothesis, const std::optional<std::string>& parent_code,
                          const TaskSpec& task, const Plan& plan, Executor& executor, PromptSession& session,
                          const PromptLibrary& prompts, const Workspace& workspace, double remaining_budget_s,
                          const DevConfig& config) {
  if (!(remaining_budget_s > 0.0)) throw InvalidArgument("coding loop needs remaining budget");
  if (config.max_debug_attempts < 1) throw InvalidArgument("max_debug_attempts must be >= 1");
  CodingOutcome out;
  const double cap = plan.per_execution_cap_s;

  std::string code = draft_solution(hypothesis, parent_code, task, plan, session, prompts, config);
  emit(session, EventKind::Draft, {{"attempt", 1}, {"kind", "draft"}, {"code_digest", code_digest(code)}});

  std::string feedback;
  for (int attempt = 1; attempt <= config.max_debug_attempts; ++attempt) {
    DebugReport report = run_debug(code, workspace, executor, cap, task, config);
    out.debug_attempts = attempt;
    out.debug_time_s += report.wall_time_s;
    json ev = debug_json(report);
    ev["attempt"] = attempt;
    ev["code_digest"] = code_digest(code);
    emit(session, EventKind::Debug, std::move(ev));
    out.debug_runs.push_back(report);

    if (report.exit_ok) {
      if (report.estimated_time_s > cap) {
        feedback += fmt::format("attempt {}: {} ({:.1f}s > {:.1f}s)\n", attempt, kEstimateExceedsCap,
                                report.estimated_time_s, cap);
        break;
      }
      if (report.estimated_time_s > config.safety_factor * remaining_budget_s) {
        feedback += fmt::format("attempt {}: {} ({:.1f}s > {:.2f} x {:.1f}s)\n", attempt, kEstimateExceedsBudget,
                                report.estimated_time_s, config.safety_factor, remaining_budget_s);
        break;
      }
      ExecutionResult full = run_full(code, workspace, executor, cap, task, config);
      out.full_time_s = full.wall_time_s;
      emit(session, EventKind::FullRun,
           {{"code_digest", code_digest(code)},
            {"exit_ok", full.exit_ok},
            {"wall_time_s", full.wall_time_s},
            {"timed_out", full.timed_out},
            {"failure", full.failure}});
      if (!full.exit_ok) {
        feedback += fmt::format("full run: {}\n{}\n", full.failure, tail_lines(full.stderr_tail, 2000));
      }
      out.full_run = std::move(full);
      break;
    }

    const std::string this_feedback =
        fmt::format("{}\nstderr:\n{}\nstdout:\n{}", report.failure, tail_lines(report.stderr_tail, 3000),
                    tail_lines(report.stdout_tail, 1500));
    feedback += fmt::format("attempt {}: {}\n", attempt, report.failure);
    if (attempt == config.max_debug_attempts) break;

    PromptVars vars{{"task_type", task.task_type},
                    {"data_type", task.data_type},
                    {"metric_name", task.metric_name},
                    {"metric_direction", task.higher_is_better ? "higher is better" : "lower is better"},
                    {"component", std::string(to_string(hypothesis.component))},
                    {"hypothesis", hypothesis.text},
                    {"code", code},
                    {"feedback", this_feedback},
                    {"constraints", plan_constraints(plan)}};
    const auto response = session.ask(steps::kReviseSolution, prompts.render(steps::kReviseSolution, vars));
    code = extract_code(response.text);
    emit(session, EventKind::Draft,
         {{"attempt", attempt + 1}, {"kind", "revise"}, {"code_digest", code_digest(code)}});
  }
  out.code = std::move(code);
  out.feedback = std::move(feedback);
  return out;
}

}  // namespace mlagent
