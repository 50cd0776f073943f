#include <doctest.h>

#include "helpers.hpp"
#include "mlagent/errors.hpp"
#include "mlagent/planner.hpp"

using namespace mlagent;
using testing::add_node;

namespace {

constexpr double kHour = 3600.0;

ExplorationGraph three_roots() {
  ExplorationGraph g;
  for (int b = 1; b <= 3; ++b) add_node(g, b, 0.5);
  return g;
}

}  // namespace

TEST_CASE("schedule examples at a twelve hour budget") {
  const ExplorationGraph g = three_roots();
  const Plan start = make_plan(0.0, 12 * kHour, g);
  CHECK(start.stage == Stage::Draft);
  CHECK_FALSE(start.allow_ensemble);
  CHECK_FALSE(start.allow_cross_validation);

  const Plan five = make_plan(5 * kHour, 12 * kHour, g);
  CHECK(five.stage == Stage::Improve);
  CHECK(five.allow_ensemble);
  CHECK(five.allow_cross_validation);

  CHECK(make_plan(11 * kHour, 12 * kHour, g).stage == Stage::Merge);
}

TEST_CASE("draft continues until enough roots exist") {
  ExplorationGraph g;
  add_node(g, 1, 0.5);
  CHECK(make_plan(2 * kHour, 12 * kHour, g).stage == Stage::Draft);
  CHECK_FALSE(make_plan(5 * kHour, 12 * kHour, g).allow_ensemble);
  add_node(g, 2, 0.5);
  add_node(g, 3, 0.5);
  CHECK(make_plan(2 * kHour, 12 * kHour, g).stage == Stage::Improve);
}

TEST_CASE("merge nodes do not count as roots") {
  ExplorationGraph g;
  add_node(g, 1, 0.5);
  add_node(g, 2, 0.5);
  add_node(g, kMergeBranch, 0.5, {0, 1});
  CHECK(root_count(g) == 2);
}

TEST_CASE("novelty bias and execution cap") {
  const ExplorationGraph g = three_roots();
  CHECK(make_plan(0.0, 12 * kHour, g).novelty_bias == doctest::Approx(1.0));
  CHECK(make_plan(3 * kHour, 12 * kHour, g).novelty_bias == doctest::Approx(0.5));
  CHECK(make_plan(6 * kHour, 12 * kHour, g).novelty_bias == doctest::Approx(0.0));
  CHECK(make_plan(10 * kHour, 12 * kHour, g).novelty_bias == doctest::Approx(0.0));

  CHECK(make_plan(0.0, 12 * kHour, g).per_execution_cap_s == doctest::Approx(kHour));
  CHECK(make_plan(11 * kHour, 12 * kHour, g).per_execution_cap_s == doctest::Approx(0.5 * kHour));
  const Plan p = make_plan(11.9 * kHour, 12 * kHour, g);
  CHECK(p.per_execution_cap_s <= p.remaining_s());
  CHECK(p.debug_sample_fraction == doctest::Approx(0.10));
}

TEST_CASE("planner argument errors") {
  const ExplorationGraph g;
  CHECK_THROWS_AS(make_plan(12 * kHour, 12 * kHour, g), BudgetExhausted);
  CHECK_THROWS_AS(make_plan(13 * kHour, 12 * kHour, g), BudgetExhausted);
  CHECK_THROWS_AS(make_plan(-1.0, 12 * kHour, g), InvalidArgument);
  CHECK_THROWS_AS(make_plan(0.0, 0.0, g), InvalidArgument);
}

TEST_CASE("planner is pure") {
  const ExplorationGraph g = three_roots();
  for (double e : {0.0, 1000.0, 20000.0, 40000.0}) {
    const Plan a = make_plan(e, 12 * kHour, g);
    const Plan b = make_plan(e, 12 * kHour, g);
    CHECK(a.stage == b.stage);
    CHECK(a.novelty_bias == b.novelty_bias);
    CHECK(a.per_execution_cap_s == b.per_execution_cap_s);
    CHECK(a.allow_ensemble == b.allow_ensemble);
  }
}

TEST_CASE("thresholds follow the configuration") {
  PlannerConfig cfg;
  cfg.merge_fraction = 0.5;
  cfg.draft_branches = 1;
  ExplorationGraph g;
  add_node(g, 1, 0.5);
  CHECK(make_plan(0.6 * 100.0, 100.0, g, cfg).stage == Stage::Merge);
  CHECK(make_plan(0.4 * 100.0, 100.0, g, cfg).stage == Stage::Improve);
}
