#include <fstream>
#include <map>

#include <doctest.h>

#include "helpers.hpp"
#include "mlagent/csv.hpp"
#include "mlagent/errors.hpp"
#include "mlagent/eval.hpp"

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

// 100 rows, 60 of class "a" and 40 of class "b".
fs::path write_source(const fs::path& dir) {
  CsvTable t{{"id", "x", "label"}, {}};
  for (int i = 0; i < 100; ++i) t.rows.push_back({std::to_string(i), std::to_string(i * 0.5), i < 60 ? "a" : "b"});
  write_csv(dir / "data.csv", t);
  return dir / "data.csv";
}

// Holdout of ten rows with alternating labels and a sample submission.
SplitManifest toy_manifest(const fs::path& dir) {
  SplitManifest m;
  m.public_dir = dir / "public";
  m.private_dir = dir / "private";
  m.label_file = m.private_dir / "label.csv";
  fs::create_directories(m.public_dir);
  fs::create_directories(m.private_dir);
  CsvTable labels{{"id", "label"}, {}}, sample{{"id", "label"}, {}};
  for (int i = 1; i <= 10; ++i) {
    labels.rows.push_back({std::to_string(i), std::to_string(i % 2)});
    sample.rows.push_back({std::to_string(i), "0"});
  }
  write_csv(m.label_file, labels);
  write_csv(m.sample_submission(), sample);
  m.test_rows = 10;
  return m;
}

// Submission matching the holdout on all but the first `wrong` rows.
void write_submission(const fs::path& path, int wrong) {
  CsvTable t{{"id", "label"}, {}};
  for (int i = 1; i <= 10; ++i) {
    const int truth = i % 2;
    t.rows.push_back({std::to_string(i), std::to_string(i <= wrong ? 1 - truth : truth)});
  }
  fs::create_directories(path.parent_path());
  write_csv(path, t);
}

TaskSpec accuracy_task() {
  TaskSpec t;
  t.metric_name = "accuracy";
  return t;
}

struct Selection {
  testing::TempDir dir{"eval"};
  TaskSpec task = accuracy_task();
  SplitManifest manifest = toy_manifest(dir.path());
  ProcessExecutor executor;
  AccuracyGrader grader;
  ExplorationGraph graph;

  EvalContext context() {
    EvalContext ctx{task, manifest, executor, grader, DevConfig{}};
    ctx.work_root = dir / "reeval";
    ctx.rerun = false;
    return ctx;
  }

  // Executed node whose stored submission gets `wrong` holdout rows wrong;
  // a negative count leaves no submission behind.
  Node add(BranchId branch, double validation, int wrong) {
    Node n;
    n.branch_id = branch;
    n.hypothesis.text = "idea " + std::to_string(graph.next_id());
    n.score = testing::score(validation);
    n.status = NodeStatus::Executed;
    n.workspace = (dir / ("ws" + std::to_string(graph.next_id()))).string();
    if (wrong >= 0) write_submission(fs::path(n.workspace) / "output" / "submission.csv", wrong);
    return graph.commit(std::move(n));
  }
};

}  // namespace

TEST_CASE("csv round trip with quoting") {
  CsvTable t{{"id", "text"}, {{"1", "a,b"}, {"2", "say \"hi\""}, {"3", ""}}};
  const CsvTable back = parse_csv(render_csv(t));
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
  CHECK(parse_csv("id,v\r\n1,2\r\n").rows == std::vector<std::vector<std::string>>{{"1", "2"}});
}

TEST_CASE("holdout split is stratified and disjoint") {
  testing::TempDir dir("split");
  SplitOptions o;
  o.source_file = write_source(dir.path());
  o.out_dir = dir / "task";
  o.seed = 7;
  const SplitManifest m = prepare_splits(o);
  CHECK(m.stratified);
  CHECK(m.test_rows == 10);
  CHECK(m.train_rows == 90);

  const CsvTable labels = read_csv(m.label_file);
  const CsvTable train = read_csv(m.public_dir / "train.csv");
  const CsvTable test = read_csv(m.public_dir / "test.csv");
  REQUIRE(labels.rows.size() == 10);
  CHECK(train.rows.size() == 90);
  CHECK(test.rows.size() == 10);
  CHECK_FALSE(test.column("label").has_value());

  // Brute count of the holdout classes against the 60/40 source.
  std::map<std::string, int> counts;
  for (const auto& row : labels.rows) ++counts[row[1]];
  CHECK(counts["a"] >= 5);
  CHECK(counts["a"] <= 7);
  CHECK(counts["a"] + counts["b"] == 10);

  std::set<std::string> train_ids;
  for (const auto& row : train.rows) train_ids.insert(row[0]);
  for (const auto& row : labels.rows) CHECK_FALSE(train_ids.count(row[0]));

  // The sample submission never equals the labels.
  CHECK(read_file(m.sample_submission()) != read_file(m.label_file));

  const fs::path saved = dir / "manifest.json";
  save_manifest(m, saved);
  const SplitManifest back = load_manifest(saved);
  CHECK(back.label_file == m.label_file);
  CHECK(back.test_rows == m.test_rows);
  CHECK(back.stratified == m.stratified);
}

TEST_CASE("split is deterministic per seed") {
  testing::TempDir dir("split");
  SplitOptions o;
  o.source_file = write_source(dir.path());
  o.out_dir = dir / "one";
  o.seed = 3;
  const auto a = prepare_splits(o);
  o.out_dir = dir / "two";
  const auto b = prepare_splits(o);
  CHECK(read_file(a.label_file) == read_file(b.label_file));
}

TEST_CASE("single-class data falls back to a plain split") {
  testing::TempDir dir("split");
  CsvTable t{{"id", "label"}, {}};
  for (int i = 0; i < 20; ++i) t.rows.push_back({std::to_string(i), "same"});
  write_csv(dir / "data.csv", t);
  SplitOptions o;
  o.source_file = dir / "data.csv";
  o.out_dir = dir / "task";
  const auto m = prepare_splits(o);
  CHECK_FALSE(m.stratified);
  CHECK(m.test_rows == 2);
}

TEST_CASE("split errors") {
  testing::TempDir dir("split");
  SplitOptions o;
  o.source_file = dir / "absent.csv";
  o.out_dir = dir / "task";
  CHECK_THROWS_AS(prepare_splits(o), SourceMissing);
  o.source_file = write_source(dir.path());
  o.target_column = "nope";
  CHECK_THROWS_AS(prepare_splits(o), SourceMissing);
  o.target_column = "label";
  o.train_fraction = 1.0;
  CHECK_THROWS(prepare_splits(o));
}

TEST_CASE("stratified allocation keeps proportions and a training row per class") {
  const auto alloc = stratified_allocation({{"a", 60}, {"b", 40}}, 10);
  CHECK(alloc.at("a") == 6);
  CHECK(alloc.at("b") == 4);
  const auto rare = stratified_allocation({{"a", 98}, {"b", 1}, {"c", 1}}, 10);
  CHECK(rare.at("b") == 0);
  CHECK(rare.at("c") == 0);
  CHECK(rare.at("a") == 10);
}

TEST_CASE("accuracy grader") {
  testing::TempDir dir("grade");
  const SplitManifest m = toy_manifest(dir.path());
  AccuracyGrader g;
  write_submission(dir / "perfect.csv", 0);
  write_submission(dir / "one_off.csv", 1);
  CHECK(g.grade(dir / "perfect.csv", m).score == doctest::Approx(1.0));
  CHECK(g.grade(dir / "one_off.csv", m).score == doctest::Approx(0.9));
  CHECK(g.grade(dir / "one_off.csv", m).metric == "accuracy");
}

TEST_CASE("grade output contract") {
  CHECK(parse_grade_output(R"({"score": 0.5, "metric": "auc", "extra": 1})", "auc").score == 0.5);
  CHECK_THROWS_AS(parse_grade_output("score: 0.5", "auc"), MalformedGradeOutput);
  CHECK_THROWS_AS(parse_grade_output(R"({"score": "high", "metric": "auc"})", "auc"), MalformedGradeOutput);
  CHECK_THROWS_AS(parse_grade_output(R"({"score": 0.5})", "auc"), MalformedGradeOutput);
  CHECK_THROWS_AS(parse_grade_output(R"({"score": 0.5, "metric": "rmse"})", "auc"), MalformedGradeOutput);
  CHECK_THROWS_AS(parse_grade_output(R"({"score": 0.5, "metric": "auc"} {"score": 1})", "auc"),
                  MalformedGradeOutput);
}

TEST_CASE("command grader reads label.csv and submission.csv from its directory") {
  testing::TempDir dir("grade");
  const SplitManifest m = toy_manifest(dir.path());
  write_file(dir / "grade.py",
             "import csv, json\n"
             "truth = {r['id']: r['label'] for r in csv.DictReader(open('label.csv'))}\n"
             "pred = {r['id']: r['label'] for r in csv.DictReader(open('submission.csv'))}\n"
             "hits = sum(1 for k, v in truth.items() if pred.get(k) == v)\n"
             "print(json.dumps({'score': hits / len(truth), 'metric': 'accuracy'}))\n");
  write_submission(dir / "sub.csv", 3);
  ProcessExecutor ex;
  CommandGrader g("python3 " + (dir / "grade.py").string(), "accuracy", dir / "scratch", ex);
  const GradeResult r = g.grade(dir / "sub.csv", m);
  CHECK(r.score == doctest::Approx(0.7));
  CHECK(r.score == doctest::Approx(AccuracyGrader().grade(dir / "sub.csv", m).score));

  write_file(dir / "crash.py", "raise SystemExit(3)\n");
  CommandGrader crash("python3 " + (dir / "crash.py").string(), "accuracy", dir / "scratch", ex);
  CHECK_THROWS_AS(crash.grade(dir / "sub.csv", m), GraderCrash);
}

TEST_CASE("submission validation") {
  testing::TempDir dir("valid");
  const SplitManifest m = toy_manifest(dir.path());
  write_submission(dir / "ok.csv", 2);
  CHECK(validate_submission(dir / "ok.csv", m.sample_submission()).empty());

  auto first = [&](const std::string& text) {
    write_file(dir / "bad.csv", text);
    const auto v = validate_submission(dir / "bad.csv", m.sample_submission());
    return v.empty() ? std::string() : v.front();
  };
  std::string rows;
  for (int i = 1; i <= 10; ++i) rows += std::to_string(i) + "," + std::to_string(i % 2) + "\n";
  CHECK(first("id,target\n" + rows).rfind("column mismatch", 0) == 0);
  CHECK(first("id,label\n1,0\n2,1\n").rfind("row count mismatch", 0) == 0);

  std::string constant = "id,label\n";
  for (int i = 1; i <= 10; ++i) constant += std::to_string(i) + ",1\n";
  CHECK(first(constant).rfind("constant predictions in column 'label'", 0) == 0);

  std::string dup = "id,label\n1,0\n";
  for (int i = 1; i <= 9; ++i) dup += std::to_string(i) + "," + std::to_string(i % 2) + "\n";
  write_file(dir / "dup.csv", dup);
  const auto v = validate_submission(dir / "dup.csv", m.sample_submission());
  auto has = [&](const std::string& prefix) {
    return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.rfind(prefix, 0) == 0; });
  };
  CHECK(has("missing ids"));
  CHECK(has("duplicate ids"));

  std::string words = "id,label\n";
  for (int i = 1; i <= 10; ++i) words += std::to_string(i) + "," + (i % 2 ? "yes" : "no") + "\n";
  CHECK(first(words).rfind("non-numeric values", 0) == 0);
}

TEST_CASE("candidate collection") {
  Selection s;
  s.add(1, 0.7, 0);
  s.add(2, 0.9, 0);
  s.add(3, 0.8, 0);
  std::vector<Node> nodes;
  for (const auto& [id, n] : s.graph.nodes()) nodes.push_back(n);
  const auto top = collect_candidates(nodes, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0].id == 1);
  CHECK(top[1].id == 2);
}

TEST_CASE("validation selection ranks by holdout, failures last") {
  Selection s;
  s.add(1, 0.99, 3);   // best on validation, 0.7 on holdout
  s.add(2, 0.80, 1);   // 0.9 on holdout
  s.add(3, 0.85, 2);   // 0.8 on holdout
  s.add(4, 0.95, -1);  // no submission
  std::vector<Node> nodes;
  for (const auto& [id, n] : s.graph.nodes()) nodes.push_back(n);
  const auto ranking = validation_select(nodes, s.context());
  REQUIRE(ranking.size() == 4);
  CHECK(ranking[0].node.id == 1);
  CHECK(ranking[0].grade->score == doctest::Approx(0.9));
  CHECK(ranking[1].node.id == 2);
  CHECK(ranking[2].node.id == 0);
  CHECK(ranking[3].node.id == 3);
  CHECK_FALSE(ranking[3].grade);
  CHECK_FALSE(ranking[3].failure.empty());
}

TEST_CASE("validation selection with a single candidate and with none usable") {
  Selection s;
  s.add(1, 0.5, 4);
  std::vector<Node> one{s.graph.node(0)};
  const auto ranking = validation_select(one, s.context());
  REQUIRE(ranking.size() == 1);
  CHECK(ranking[0].grade->score == doctest::Approx(0.6));

  Selection bad;
  bad.add(1, 0.5, -1);
  std::vector<Node> none{bad.graph.node(0)};
  CHECK_THROWS_AS(validation_select(none, bad.context()), AllCandidatesFailed);
  CHECK_THROWS_AS(validation_select({}, bad.context()), AllCandidatesFailed);
}

TEST_CASE("invalid submissions are reported as failures") {
  Selection s;
  s.add(1, 0.9, 0);
  const Node& n = s.add(2, 0.8, 0);
  write_file(fs::path(n.workspace) / "output" / "submission.csv", "id,label\n1,0\n");
  std::vector<Node> nodes;
  for (const auto& [id, node] : s.graph.nodes()) nodes.push_back(node);
  const auto ranking = validation_select(nodes, s.context());
  REQUIRE(ranking.size() == 2);
  CHECK(ranking[1].node.id == 1);
  CHECK(ranking[1].failure.rfind("invalid submission: ", 0) == 0);
}

TEST_CASE("rerun mode re-executes the candidate code") {
  Selection s;
  Node n;
  n.branch_id = 1;
  n.hypothesis.text = "rerun me";
  n.score = testing::score(0.5);
  n.status = NodeStatus::Executed;
  std::string rows;
  for (int i = 1; i <= 10; ++i) rows += std::to_string(i) + "," + std::to_string(i % 2) + "\\n";
  n.code = "import os\nos.makedirs('output', exist_ok=True)\nopen('output/submission.csv','w').write('id,label\\n" +
           rows + "')\n";
  s.graph.commit(n);
  auto ctx = s.context();
  ctx.rerun = true;
  const auto ranking = validation_select({s.graph.node(0)}, ctx);
  CHECK(ranking[0].grade->score == doctest::Approx(1.0));
  CHECK(fs::exists(s.dir / "reeval" / "reeval_node0000" / "output" / "submission.csv"));
}

TEST_CASE("sota selection") {
  const TaskSpec task = accuracy_task();
  PromptLibrary prompts;
  auto exp = [](NodeId id, double v) {
    Node n;
    n.id = id;
    n.score = testing::score(v);
    n.status = NodeStatus::Executed;
    return std::make_pair(n, std::string("feedback"));
  };
  const std::vector<std::pair<Node, std::string>> three{exp(0, 0.5), exp(1, 0.8), exp(2, 0.8)};

  SUBCASE("single experiment needs no judgement") {
    const auto c = select_sota({exp(0, 0.1)}, task, nullptr, prompts);
    CHECK(c.index == 0u);
    CHECK_FALSE(c.fallback);
  }
  SUBCASE("backend choice") {
    Recorder r;
    r.script.add("select_sota", {"```json\n{\"selected_SOTA_idx\": 2}\n```"});
    PromptSession session(r, "sota", 1);
    const auto c = select_sota(three, task, &session, prompts);
    CHECK(c.index == 2u);
    CHECK_FALSE(c.fallback);
  }
  SUBCASE("null choice") {
    Recorder r;
    r.script.add("select_sota", {"{\"selected_SOTA_idx\": null}"});
    PromptSession session(r, "sota", 1);
    CHECK_FALSE(select_sota(three, task, &session, prompts).index);
  }
  SUBCASE("unusable reply falls back to the best validation score, earliest on ties") {
    Recorder r;
    r.script.add("select_sota", {"{\"selected_SOTA_idx\": 9}"});
    PromptSession session(r, "sota", 1);
    const auto c = select_sota(three, task, &session, prompts);
    CHECK(c.index == 1u);
    CHECK(c.fallback);
  }
  SUBCASE("offline") {
    CHECK(offline_sota(three) == 1);
    const auto c = select_sota(three, task, nullptr, prompts);
    CHECK(c.index == 1u);
    CHECK(c.fallback);
  }
}

TEST_CASE("final submission follows the holdout, not validation") {
  Selection s;
  s.add(1, 0.95, 4);  // validation argmax, 0.6 on holdout
  s.add(2, 0.80, 1);  // 0.9 on holdout
  s.add(2, 0.70, 0);  // same branch, below its best: not a candidate
  PromptLibrary prompts;
  const auto out = final_submit(s.graph, s.context(), nullptr, prompts, s.dir / "final");
  CHECK(out.node.id == 1);
  CHECK(out.grade.score == doctest::Approx(0.9));
  CHECK(out.ranking.size() == 2);
  REQUIRE(fs::exists(out.submission));
  CHECK(read_file(out.submission) == read_file(fs::path(s.graph.node(1).workspace) / "output" / "submission.csv"));
}

TEST_CASE("holdout ties at the top are settled by the sota judge") {
  Selection s;
  s.add(1, 0.90, 1);
  s.add(2, 0.80, 1);
  Recorder r;
  r.script.add("select_sota", {"{\"selected_SOTA_idx\": 1}"});
  PromptSession session(r, "sota", 1);
  PromptLibrary prompts;
  const auto out = final_submit(s.graph, s.context(), &session, prompts, s.dir / "final");
  CHECK(out.node.id == 1);
  CHECK(r.seen.size() == 1);
}

TEST_CASE("final submission on an empty graph") {
  Selection s;
  PromptLibrary prompts;
  CHECK_THROWS_AS(final_submit(s.graph, s.context(), nullptr, prompts, s.dir / "final"), AllCandidatesFailed);
}
