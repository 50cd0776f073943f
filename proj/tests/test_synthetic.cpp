#include <cmath>

#include <doctest.h>

#include "helpers.hpp"
#include "mlagent/csv.hpp"
#include "mlagent/debug_block.hpp"
#include "mlagent/structured_response.hpp"
#include "mlagent/dev_workflow.hpp"
#include "mlagent/errors.hpp"
#include "mlagent/eval.hpp"
#include "mlagent/synthetic.hpp"

using namespace mlagent;
namespace fs = std::filesystem;

namespace {

LandscapeConfig landscape_config(std::uint64_t seed) {
  LandscapeConfig c;
  c.seed = seed;
  return c;
}

// Synthetic task split into public/private plus a workspace for running directives.
struct SyntheticTask {
  testing::TempDir dir{"synth"};
  SyntheticTaskConfig config;
  SplitManifest manifest;
  Workspace ws;

  explicit SyntheticTask(std::uint64_t seed = 11) {
    config.seed = seed;
    config.landscape.seed = seed;
    config.rows = 600;
    write_synthetic_task(dir / "raw", config);
    SplitOptions o;
    o.source_file = dir / "raw" / "train.csv";
    o.out_dir = dir / "task";
    manifest = prepare_splits(o);
    ws = Workspace::create(dir / "ws", manifest.public_dir);
  }

  ExecOutcome run(const SolutionDirective& d, bool debug = false, double timeout = 100.0) {
    write_file(ws.root / "main.py", render_directive(d));
    SyntheticExecutor ex(config);
    ExecRequest r;
    r.argv = {"python3", "main.py"};
    r.workdir = ws.root;
    r.timeout_s = timeout;
    r.debug = debug;
    return ex.execute(r);
  }
};

PromptRequest ask(std::string step, std::string prompt, std::string key = "k") {
  PromptRequest r;
  r.step_name = std::move(step);
  r.rendered_prompt = std::move(prompt);
  r.idempotency_key = std::move(key);
  return r;
}

}  // namespace

TEST_CASE("landscape peaks at the planted optimum") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Landscape l(landscape_config(seed));
    CHECK(l.score(l.optimum()) == doctest::Approx(1.0));
    // Grid oracle: nothing on a 101 x 101 grid beats the optimum.
    double grid_max = 0.0;
    std::vector<double> arg;
    for (int i = 0; i <= 100; ++i) {
      for (int j = 0; j <= 100; ++j) {
        const std::vector<double> p{-1.0 + 0.02 * i, -1.0 + 0.02 * j};
        const double v = l.score(p);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        if (v > grid_max) {
          grid_max = v;
          arg = p;
        }
      }
    }
    CHECK(grid_max <= l.score(l.optimum()));
    CHECK(std::hypot(arg[0] - l.optimum()[0], arg[1] - l.optimum()[1]) < 0.05);
    for (const auto& b : l.bumps()) {
      for (double c : b.center) CHECK(std::abs(c) <= 0.8);
    }
    for (std::size_t k = 1; k < l.bumps().size(); ++k) CHECK(l.bumps()[k].height < 1.0);
  }
}

TEST_CASE("landscape is deterministic and validates inputs") {
  const Landscape a(landscape_config(5)), b(landscape_config(5)), c(landscape_config(6));
  const std::vector<double> p{0.1, -0.3};
  CHECK(a.score(p) == b.score(p));
  CHECK(a.optimum() != c.optimum());
  CHECK_THROWS_AS(a.score(std::vector<double>{0.1}), DimensionMismatch);
  LandscapeConfig bad;
  bad.valley_width = -1.0;
  CHECK_THROWS(Landscape{bad});
}

TEST_CASE("valley width ties distractor heights to distance from the optimum") {
  LandscapeConfig c = landscape_config(9);
  c.valley_width = 0.3;
  c.bump_count = 12;
  const Landscape l(c);
  const auto& opt = l.optimum();
  for (std::size_t k = 1; k < l.bumps().size(); ++k) {
    const auto& b = l.bumps()[k];
    const double r = std::hypot(b.center[0] - opt[0], b.center[1] - opt[1]);
    const double expected = c.distractor_height_min + (c.distractor_height_max - c.distractor_height_min) *
                                                          std::exp(-r * r / (2 * 0.3 * 0.3));
    CHECK(b.height == doctest::Approx(expected));
  }
}

TEST_CASE("markers and directives round trip") {
  const std::vector<double> v{0.25, -0.5};
  CHECK(parse_params_marker("move to " + params_marker(v) + " now") == v);
  CHECK(parse_delta_marker("shift " + delta_marker(v)) == v);
  CHECK_FALSE(parse_params_marker("no marker"));
  CHECK_FALSE(parse_delta_marker(params_marker(v)));

  SolutionDirective d{{0.125, -0.75}, 2.5, "none"};
  const auto back = parse_directive(render_directive(d));
  REQUIRE(back);
  CHECK(back->params == d.params);
  CHECK(back->cost_s == doctest::Approx(2.5));
  CHECK(back->bug == "none");
  CHECK_FALSE(parse_directive("print('hello')\n"));

  const Landscape l(landscape_config(4));
  d.params = l.optimum();
  CHECK(*solution_quality(l, render_directive(d)) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("synthetic task files") {
  testing::TempDir dir("synth");
  SyntheticTaskConfig c;
  c.rows = 50;
  write_synthetic_task(dir.path(), c);
  const CsvTable t = read_csv(dir / "train.csv");
  CHECK(t.rows.size() == 50);
  CHECK(t.column("id"));
  CHECK(t.column("label"));
  CHECK(fs::exists(dir / "task.json"));
  CHECK(fs::exists(dir / "description.md"));

  const json j = c;
  const SyntheticTaskConfig back = j.get<SyntheticTaskConfig>();
  CHECK(json(back) == j);
}

TEST_CASE("executor quality follows the landscape") {
  SyntheticTask task;
  const Landscape l(task.config.landscape);
  AccuracyGrader grader;

  const auto best = task.run({l.optimum(), 1.0, "none"});
  REQUIRE(best.ok());
  const double at_optimum = grader.grade(task.ws.submission_path(), task.manifest).score;

  std::vector<double> far{-l.optimum()[0], -l.optimum()[1]};
  const double q_far = l.score(far);
  const auto worse = task.run({far, 1.0, "none"});
  REQUIRE(worse.ok());
  const double at_far = grader.grade(task.ws.submission_path(), task.manifest).score;

  // Holdout accuracy is about (1 + q) / 2 before label noise.
  CHECK(at_optimum > at_far);
  CHECK(at_optimum > 0.8);
  CHECK(at_far < 0.5 * (1.0 + q_far) + 0.1);
  CHECK(best.stdout_tail.find("validation_score: ") != std::string::npos);
  CHECK(validate_submission(task.ws.submission_path(), task.manifest.sample_submission()).empty());
}

TEST_CASE("executor debug legs, bugs and timeouts") {
  SyntheticTask task;
  const Landscape l(task.config.landscape);

  const auto debug = task.run({l.optimum(), 10.0, "none"}, true);
  REQUIRE(debug.ok());
  const DebugTimes parsed = parse_debug_block(debug.stdout_tail);
  CHECK(parsed.estimated_time_s >= 9.0 - 1e-9);
  CHECK(parsed.estimated_time_s <= 11.0 + 1e-9);
  CHECK(debug.wall_time_s == doctest::Approx(1.0));

  const auto crash = task.run({l.optimum(), 1.0, "KeyError: 'label'"});
  CHECK_FALSE(crash.ok());
  CHECK(crash.stderr_tail.find("KeyError") != std::string::npos);

  const auto slow = task.run({l.optimum(), 50.0, "none"}, false, 5.0);
  CHECK(slow.timed_out);
  CHECK(slow.wall_time_s == doctest::Approx(5.0));

  write_file(task.ws.root / "main.py", "import pandas\n");
  SyntheticExecutor ex(task.config);
  ExecRequest r;
  r.workdir = task.ws.root;
  r.timeout_s = 10;
  CHECK(ex.execute(r).exit_code == 1);
}

TEST_CASE("synthetic backend applies a hypothesis shift to the parent configuration") {
  SyntheticTaskConfig c;
  c.bug_rate = 0.0;
  SyntheticBackend b(c);
  const std::vector<double> delta{0.25, -0.5};

  SUBCASE("new root starts from the default configuration") {
    const auto r = b.complete(ask("draft_solution", "Hypothesis to implement: try " + delta_marker(delta) + "\n"));
    const auto code = extract_fenced_block(r.text, "python");
    REQUIRE(code);
    const auto d = parse_directive(*code);
    REQUIRE(d);
    CHECK(d->params[0] == doctest::Approx(0.25));
    CHECK(d->params[1] == doctest::Approx(-0.5));
  }
  SUBCASE("child of a parent script") {
    const SolutionDirective parent{{0.5, 0.75}, 1.0, "none"};
    const std::string prompt = "Hypothesis to implement: try " + delta_marker(delta) +
                               "\nStart from the parent solution and edit it:\n```\n" + render_directive(parent) +
                               "```\n";
    const auto d = parse_directive(*extract_fenced_block(b.complete(ask("draft_solution", prompt)).text, "python"));
    REQUIRE(d);
    CHECK(d->params[0] == doctest::Approx(0.75));
    CHECK(d->params[1] == doctest::Approx(0.25));
  }
  SUBCASE("shifts are clamped to the box") {
    const SolutionDirective parent{{0.9, -0.9}, 1.0, "none"};
    const std::string prompt = "Hypothesis to implement: " + delta_marker(delta) +
                               "\nStart from the parent solution\n```\n" + render_directive(parent) + "```\n";
    const auto d = parse_directive(*extract_fenced_block(b.complete(ask("draft_solution", prompt)).text, "python"));
    REQUIRE(d);
    CHECK(d->params[0] == doctest::Approx(1.0));
    CHECK(d->params[1] == doctest::Approx(-1.0));
  }
}

TEST_CASE("synthetic backend replies are a function of the idempotency key") {
  SyntheticBackend b(SyntheticTaskConfig{});
  const std::string prompt = "Hypothesis to implement: anything\n";
  CHECK(b.complete(ask("draft_solution", prompt, "a")).text == b.complete(ask("draft_solution", prompt, "a")).text);
  CHECK(b.complete(ask("draft_solution", prompt, "a")).text != b.complete(ask("draft_solution", prompt, "b")).text);
}

TEST_CASE("synthetic backend revise clears the bug") {
  SyntheticBackend b(SyntheticTaskConfig{});
  const SolutionDirective buggy{{0.1, 0.2}, 1.0, "KeyError: 'label'"};
  const auto r = b.complete(ask("revise_solution", "Current script:\n```\n" + render_directive(buggy) + "```\n"));
  const auto d = parse_directive(*extract_fenced_block(r.text, "python"));
  REQUIRE(d);
  CHECK(d->bug == "none");
  CHECK(d->params == buggy.params);
}

TEST_CASE("synthetic sota choice picks the highest listed validation score") {
  SyntheticBackend b(SyntheticTaskConfig{});
  const auto r = b.complete(ask("select_sota", "0. node 3 (a): validation 0.5 | x\n1. node 7 (b): validation 0.9 | y\n"
                                               "2. node 8 (c): validation none | z\n"));
  CHECK(json::parse(r.text).at("selected_SOTA_idx") == 1);
}
