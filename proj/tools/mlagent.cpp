#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mlagent/config.hpp"
#include "mlagent/errors.hpp"
#include "mlagent/orchestrator.hpp"
#include "mlagent/synthetic.hpp"
#include "mlagent/trace.hpp"

namespace fs = std::filesystem;
using namespace mlagent;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNoSubmission = 3;

int finish_run(const RunResult& r) {
  std::cout << render_report(r.report);
  std::cout << fmt::format("\nrun directory: {}\n", r.run_dir.string());
  if (!r.final) {
    std::cerr << "no valid final submission: " << r.final_error << "\n";
    return kExitNoSubmission;
  }
  std::cout << fmt::format("final submission: {}\n", r.final->submission.string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Autonomous ML-engineering agent: explores, develops and selects competition solutions."};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "Start a run on a task directory");
  std::string task_dir, config_path, budget_text, runs_dir, run_name;
  std::optional<std::uint64_t> seed;
  std::optional<long> max_loops;
  bool offline = false;
  long crash_after = 0;
  run_cmd->add_option("task_dir", task_dir, "Task directory")->required();
  run_cmd->add_option("--budget", budget_text, "Time budget, e.g. 12h, 90m, 3600");
  run_cmd->add_option("--config", config_path, "Run configuration (JSON)");
  run_cmd->add_option("--seed", seed, "Run seed");
  run_cmd->add_flag("--offline", offline, "Never contact a remote backend");
  run_cmd->add_option("--max-loops", max_loops, "Stop after this many loops");
  run_cmd->add_option("--runs-dir", runs_dir, "Where run directories are created");
  run_cmd->add_option("--name", run_name, "Run directory name");
  run_cmd->add_option("--crash-after-loops", crash_after, "Testing aid: terminate abruptly after N loops");

  auto* resume_cmd = app.add_subcommand("resume", "Continue an interrupted run");
  std::string trace_path;
  resume_cmd->add_option("trace", trace_path, "trace.jsonl of the run")->required();

  auto* report_cmd = app.add_subcommand("report", "Print the metrics of a run");
  bool report_json = false;
  report_cmd->add_option("trace", trace_path, "trace.jsonl of the run")->required();
  report_cmd->add_flag("--json", report_json, "Print the report as JSON");

  auto* validate_cmd = app.add_subcommand("validate-task", "Check a task directory");
  validate_cmd->add_option("task_dir", task_dir, "Task directory")->required();

  auto* synth_cmd = app.add_subcommand("make-synthetic-task", "Write an offline synthetic task");
  std::string synth_dir;
  SyntheticTaskConfig synth;
  synth_cmd->add_option("dir", synth_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Data and landscape seed");
  synth_cmd->add_option("--rows", synth.rows, "Number of labelled rows");
  synth_cmd->add_option("--base-cost", synth.base_cost_s, "Nominal full-run time of a solution (s)");
  synth_cmd->add_option("--time-scale", synth.time_scale, "Real seconds slept per reported second");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run_cmd) {
      RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
      if (!budget_text.empty()) cfg.budget_s = parse_duration(budget_text);
      if (seed) cfg.seed = *seed;
      if (max_loops) cfg.max_loops = *max_loops;
      if (!runs_dir.empty()) cfg.runs_dir = runs_dir;
      if (!run_name.empty()) cfg.run_name = run_name;
      cfg.crash_after_loops = crash_after;
      if (offline) force_offline(cfg, load_task(task_dir));
      cfg.validate();
      return finish_run(run(task_dir, cfg));
    }
    if (*resume_cmd) return finish_run(resume(trace_path));
    if (*report_cmd) {
      const json r = build_report(read_trace(trace_path));
      std::cout << (report_json ? r.dump(2) + "\n" : render_report(r));
      return kExitOk;
    }
    if (*validate_cmd) {
      const auto problems = validate_task(task_dir);
      for (const auto& p : problems) std::cerr << "problem: " << p << "\n";
      if (!problems.empty()) return kExitConfig;
      std::cout << "task is valid\n";
      return kExitOk;
    }
    if (*synth_cmd) {
      synth.landscape.seed = synth.seed;
      write_synthetic_task(synth_dir, synth);
      std::cout << fmt::format("synthetic task written to {}\n", synth_dir);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SourceMissing& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CorruptTrace& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
