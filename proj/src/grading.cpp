#include <cmath>
#include <set>

#include <fmt/format.h>

#include "mlagent/csv.hpp"
#include "mlagent/debug_block.hpp"
#include "mlagent/errors.hpp"
#include "mlagent/eval.hpp"
#include "mlagent/json_io.hpp"
#include "mlagent/structured_response.hpp"

namespace fs = std::filesystem;

namespace mlagent {

GradeResult parse_grade_output(std::string_view output, const std::string& expected_metric) {
  const std::string body = trim(output);
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    throw MalformedGradeOutput("output is not a single JSON object", std::string(output));
  }
  if (!j.is_object()) throw MalformedGradeOutput("output is not a JSON object", std::string(output));
  if (!j.contains("score") || !j.at("score").is_number()) {
    throw MalformedGradeOutput("\"score\" missing or not a number", std::string(output));
  }
  if (!j.contains("metric") || !j.at("metric").is_string()) {
    throw MalformedGradeOutput("\"metric\" missing or not text", std::string(output));
  }
  GradeResult g{j.at("score").get<double>(), j.at("metric").get<std::string>()};
  if (!std::isfinite(g.score)) throw MalformedGradeOutput("score is not finite", std::string(output));
  if (g.metric != expected_metric) {
    throw MalformedGradeOutput(fmt::format("metric '{}' differs from the task metric '{}'", g.metric, expected_metric),
                               std::string(output));
  }
  return g;
}

namespace {

bool same_label(const std::string& a, const std::string& b) {
  const std::string ta = trim(a), tb = trim(b);
  if (ta == tb) return true;
  const auto na = parse_real(ta), nb = parse_real(tb);
  return na && nb && *na == *nb;
}

}  // namespace

std::string AccuracyGrader::grade_json(const fs::path& submission, const SplitManifest& manifest) {
  const CsvTable labels = read_csv(manifest.label_file);
  const CsvTable sub = read_csv(submission);
  const auto lid = labels.column(manifest.id_column), ltarget = labels.column(manifest.target_column);
  const auto sid = sub.column(manifest.id_column), starget = sub.column(manifest.target_column);
  if (!lid || !ltarget) throw GraderCrash("label file lacks id/target columns");
  if (!sid || !starget) throw GraderCrash("submission lacks id/target columns");
  if (labels.rows.empty()) throw GraderCrash("label file is empty");
  std::map<std::string, std::string> predicted;
  for (const auto& row : sub.rows) {
    if (row.size() > std::max(*sid, *starget)) predicted[row[*sid]] = row[*starget];
  }
  std::size_t correct = 0;
  for (const auto& row : labels.rows) {
    auto it = predicted.find(row[*lid]);
    if (it != predicted.end() && same_label(it->second, row[*ltarget])) ++correct;
  }
  const double score = static_cast<double>(correct) / static_cast<double>(labels.rows.size());
  return json{{"score", score}, {"metric", "accuracy"}}.dump();
}

GradeResult AccuracyGrader::grade(const fs::path& submission, const SplitManifest& manifest) {
  return parse_grade_output(grade_json(submission, manifest), "accuracy");
}

CommandGrader::CommandGrader(std::string command, std::string metric, fs::path scratch_root, Executor& executor,
                             double timeout_s)
    : command_(std::move(command)),
      metric_(std::move(metric)),
      scratch_root_(std::move(scratch_root)),
      executor_(executor),
      timeout_s_(timeout_s) {}

GradeResult CommandGrader::grade(const fs::path& submission, const SplitManifest& manifest) {
  const fs::path dir = scratch_root_ / fmt::format("grade_{:05d}", counter_.fetch_add(1));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw WriteFailure("cannot create grading directory " + dir.string());
  fs::copy_file(manifest.label_file, dir / "label.csv", fs::copy_options::overwrite_existing, ec);
  if (!ec) fs::copy_file(submission, dir / "submission.csv", fs::copy_options::overwrite_existing, ec);
  if (ec) throw GraderCrash("cannot stage grading inputs: " + ec.message());

  ExecRequest req;
  req.argv = split_command(command_);
  req.workdir = dir;
  req.timeout_s = timeout_s_;
  const ExecOutcome o = executor_.execute(req);
  if (!o.ok()) {
    throw GraderCrash(fmt::format("grader exited with status {}{}: {}", o.exit_code, o.timed_out ? " (timeout)" : "",
                                  trim(o.stderr_tail)));
  }
  return parse_grade_output(o.stdout_tail, metric_);
}

std::vector<std::string> validate_submission(const fs::path& submission, const fs::path& sample_submission,
                                             const std::string& id_column) {
  std::vector<std::string> v;
  CsvTable sub, sample;
  try {
    sub = read_csv(submission);
  } catch (const Error& e) {
    return {fmt::format("unreadable submission: {}", e.what())};
  }
  try {
    sample = read_csv(sample_submission);
  } catch (const Error& e) {
    return {fmt::format("unreadable sample submission: {}", e.what())};
  }
  if (sub.header != sample.header) {
    v.push_back(fmt::format("column mismatch: expected [{}], got [{}]", fmt::join(sample.header, ","),
                            fmt::join(sub.header, ",")));
    return v;
  }
  const auto id = sub.column(id_column);
  std::size_t ragged = 0, missing_values = 0;
  for (const auto& row : sub.rows) {
    if (row.size() != sub.header.size()) ++ragged;
    for (const auto& f : row) {
      if (trim(f).empty()) ++missing_values;
    }
  }
  if (ragged) v.push_back(fmt::format("malformed rows: {} rows have the wrong number of fields", ragged));
  if (missing_values) v.push_back(fmt::format("missing values: {}", missing_values));
  if (sub.rows.size() != sample.rows.size()) {
    v.push_back(fmt::format("row count mismatch: expected {}, got {}", sample.rows.size(), sub.rows.size()));
  }
  if (id) {
    std::set<std::string> expected, seen;
    std::size_t duplicates = 0, unknown = 0;
    for (const auto& row : sample.rows) {
      if (*id < row.size()) expected.insert(row[*id]);
    }
    for (const auto& row : sub.rows) {
      if (*id >= row.size()) continue;
      if (!seen.insert(row[*id]).second) ++duplicates;
      if (!expected.count(row[*id])) ++unknown;
    }
    std::size_t missing = 0;
    for (const auto& e : expected) {
      if (!seen.count(e)) ++missing;
    }
    if (missing) v.push_back(fmt::format("missing ids: {}", missing));
    if (unknown) v.push_back(fmt::format("unknown ids: {}", unknown));
    if (duplicates) v.push_back(fmt::format("duplicate ids: {}", duplicates));
  }
  for (std::size_t c = 0; c < sub.header.size(); ++c) {
    if (id && c == *id) continue;
    bool numeric_reference = !sample.rows.empty();
    for (const auto& row : sample.rows) {
      if (c >= row.size() || !parse_real(row[c])) numeric_reference = false;
    }
    std::size_t non_numeric = 0;
    std::set<std::string> distinct;
    for (const auto& row : sub.rows) {
      if (c >= row.size()) continue;
      if (numeric_reference && !trim(row[c]).empty() && !parse_real(row[c])) ++non_numeric;
      distinct.insert(trim(row[c]));
    }
    if (non_numeric) {
      v.push_back(fmt::format("non-numeric values: {} in column '{}'", non_numeric, sub.header[c]));
    }
    if (sub.rows.size() > 1 && distinct.size() == 1) {
      v.push_back(fmt::format("constant predictions in column '{}'", sub.header[c]));
    }
  }
  return v;
}

}  // namespace mlagent
