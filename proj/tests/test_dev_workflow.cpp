#include <fstream>

#include <doctest.h>

#include "helpers.hpp"
#include "mlagent/dev_workflow.hpp"
#include "mlagent/errors.hpp"

using namespace mlagent;
namespace fs = std::filesystem;

namespace {

class Recorder final : public PromptBackend {
 public:
  ScriptedBackend script;
  std::vector<PromptRequest> seen;
  PromptResponse complete(const PromptRequest& r) override {
    seen.push_back(r);
    return script.complete(r);
  }
  std::string id() const override { return "recorder"; }
};

TaskSpec toy_task() {
  TaskSpec t;
  t.task_type = "Classification";
  t.data_type = "Tabular";
  t.metric_name = "accuracy";
  return t;
}

Plan improve_plan(double cap = 30.0) {
  Plan p;
  p.stage = Stage::Improve;
  p.budget_s = 3600;
  p.elapsed_s = 600;
  p.per_execution_cap_s = cap;
  return p;
}

// Debug mode prints a debug block with the given estimate; the full run
// writes a submission unless told otherwise.
std::string script(double estimate, bool write_submission = true) {
  std::string s = "import sys, os\n"
                  "debug = '--debug' in sys.argv\n"
                  "print('training', flush=True)\n"
                  "if debug:\n"
                  "    print('=== Start of Debug Information ===')\n"
                  "    print('debug_time: 0.5')\n"
                  "    print('estimated_time: " + std::to_string(estimate) + "')\n"
                  "    print('=== End of Debug Information ===')\n"
                  "    sys.exit(0)\n";
  if (write_submission) {
    s += "os.makedirs('output', exist_ok=True)\n"
         "open('output/submission.csv', 'w').write('id,label\\n1,0\\n2,1\\n')\n";
  }
  s += "print('validation_score: 0.8')\n";
  return s;
}

const std::string kCrash = "raise RuntimeError('shape mismatch')\n";

std::string fenced(const std::string& code) { return "```python\n" + code + "```\n"; }

struct Fixture {
  testing::TempDir dir{"dev"};
  Recorder backend;
  TaskSpec task = toy_task();
  PromptLibrary prompts;
  ProcessExecutor executor;
  DevConfig config;
  Workspace ws;
  PromptSession session{backend, "dev", 1};
  Fixture() {
    fs::create_directories(dir / "public");
    ws = Workspace::create(dir / "ws", dir / "public");
  }
};

Hypothesis idea() {
  Hypothesis h;
  h.text = "gradient boosting";
  return h;
}

}  // namespace

TEST_CASE("workspace layout links the public input") {
  Fixture f;
  CHECK(fs::is_symlink(f.ws.input_dir));
  CHECK(fs::equivalent(f.ws.input_dir, f.dir / "public"));
  CHECK(fs::is_directory(f.ws.output_dir));
  CHECK(f.ws.environment().at("MLAGENT_OUTPUT_DIR") == f.ws.output_dir.string());
}

TEST_CASE("draft prompt assembly") {
  Fixture f;
  f.backend.script.add("draft_solution", {fenced("print(1)\n"), fenced("print(2)\n")});
  Plan draft = improve_plan();
  draft.stage = Stage::Draft;
  CHECK(draft_solution(idea(), std::nullopt, f.task, draft, f.session, f.prompts, f.config) == "print(1)\n");
  const auto& first = f.backend.seen[0].rendered_prompt;
  CHECK(first.find("Do not use ensembling") != std::string::npos);
  CHECK(first.find("Do not use cross-validation") != std::string::npos);
  CHECK(first.find("gradient boosting") != std::string::npos);

  draft_solution(idea(), std::string("PARENT_CODE_MARKER"), f.task, draft, f.session, f.prompts, f.config);
  const auto& second = f.backend.seen[1].rendered_prompt;
  CHECK(second.find("PARENT_CODE_MARKER") != std::string::npos);
  CHECK(second.find("edit it") != std::string::npos);
}

TEST_CASE("debug runs") {
  Fixture f;
  SUBCASE("valid block") {
    const auto r = run_debug(script(20.0), f.ws, f.executor, 10.0, f.task, f.config);
    CHECK(r.exit_ok);
    CHECK(r.debug_time_s == 0.5);
    CHECK(r.estimated_time_s == 20.0);
  }
  SUBCASE("sleeping past the cap") {
    const auto r = run_debug("import time\ntime.sleep(20)\n", f.ws, f.executor, 0.5, f.task, f.config);
    CHECK_FALSE(r.exit_ok);
    CHECK(r.timed_out);
    CHECK(r.failure.find(kTimeoutMarker) != std::string::npos);
  }
  SUBCASE("traceback") {
    const auto r = run_debug(kCrash, f.ws, f.executor, 10.0, f.task, f.config);
    CHECK_FALSE(r.exit_ok);
    CHECK(r.stderr_tail.find("RuntimeError: shape mismatch") != std::string::npos);
  }
  SUBCASE("no debug block") {
    const auto r = run_debug("print('hi')\n", f.ws, f.executor, 10.0, f.task, f.config);
    CHECK_FALSE(r.exit_ok);
  }
}

TEST_CASE("full runs") {
  Fixture f;
  SUBCASE("submission written") {
    const auto r = run_full(script(1.0), f.ws, f.executor, 10.0, f.task, f.config);
    CHECK(r.exit_ok);
    REQUIRE(r.submission_path);
    CHECK(fs::exists(*r.submission_path));
  }
  SUBCASE("no submission") {
    const auto r = run_full(script(1.0, false), f.ws, f.executor, 10.0, f.task, f.config);
    CHECK_FALSE(r.exit_ok);
    CHECK(r.failure.find(kMissingSubmission) != std::string::npos);
  }
  SUBCASE("stale submission from an earlier run does not count") {
    run_full(script(1.0), f.ws, f.executor, 10.0, f.task, f.config);
    const auto r = run_full(script(1.0, false), f.ws, f.executor, 10.0, f.task, f.config);
    CHECK_FALSE(r.exit_ok);
  }
  SUBCASE("timeout keeps partial output") {
    const auto r = run_full("import time\nprint('epoch 1', flush=True)\ntime.sleep(20)\n", f.ws, f.executor, 0.5,
                            f.task, f.config);
    CHECK_FALSE(r.exit_ok);
    CHECK(r.timed_out);
    CHECK(r.stdout_tail == "epoch 1\n");
  }
}

TEST_CASE("coding loop") {
  SUBCASE("second draft passes debug") {
    Fixture f;
    f.backend.script.add("draft_solution", {fenced(kCrash)});
    f.backend.script.add("revise_solution", {fenced(script(5.0))});
    const auto out = coding_loop(idea(), std::nullopt, f.task, improve_plan(), f.executor, f.session, f.prompts, f.ws,
                                 3000.0, f.config);
    CHECK(out.debug_attempts == 2);
    REQUIRE(out.full_run);
    CHECK(out.ok());
    // The revise prompt carried the traceback.
    CHECK(f.backend.seen.back().rendered_prompt.find("shape mismatch") != std::string::npos);
  }
  SUBCASE("every attempt fails") {
    Fixture f;
    f.config.max_debug_attempts = 3;
    f.backend.script.add("draft_solution", {fenced(kCrash)});
    f.backend.script.add("revise_solution", {fenced(kCrash), fenced(kCrash)});
    const auto out = coding_loop(idea(), std::nullopt, f.task, improve_plan(), f.executor, f.session, f.prompts, f.ws,
                                 3000.0, f.config);
    CHECK(out.debug_attempts == 3);
    CHECK_FALSE(out.full_run);
    CHECK_FALSE(out.ok());
  }
  SUBCASE("estimate far above the cap blocks the full run") {
    Fixture f;
    f.backend.script.add("draft_solution", {fenced(script(300.0))});
    const auto out = coding_loop(idea(), std::nullopt, f.task, improve_plan(30.0), f.executor, f.session, f.prompts,
                                 f.ws, 3000.0, f.config);
    CHECK_FALSE(out.full_run);
    CHECK(out.feedback.find(kEstimateExceedsCap) != std::string::npos);
  }
  SUBCASE("estimate above the remaining budget blocks the full run") {
    Fixture f;
    f.backend.script.add("draft_solution", {fenced(script(25.0))});
    const auto out = coding_loop(idea(), std::nullopt, f.task, improve_plan(30.0), f.executor, f.session, f.prompts,
                                 f.ws, 20.0, f.config);
    CHECK_FALSE(out.full_run);
    CHECK(out.feedback.find(kEstimateExceedsBudget) != std::string::npos);
  }
}

TEST_CASE("helpers") {
  CHECK(split_command("python3  main.py --x") == std::vector<std::string>{"python3", "main.py", "--x"});
  CHECK(code_digest("a") == code_digest("a"));
  CHECK(code_digest("a") != code_digest("b"));
}
