#include <algorithm>
#include <cctype>

#include "mlagent/errors.hpp"
#include "mlagent/json_io.hpp"
#include "mlagent/structured_response.hpp"

namespace mlagent {

namespace {

std::string require_text(const json& doc, const char* key, const std::string& raw) {
  if (!doc.contains(key) || doc.at(key).is_null()) throw MissingField(key);
  const json& v = doc.at(key);
  if (!v.is_string()) throw MalformedDocument(std::string("field '") + key + "' is not text", raw);
  return v.get<std::string>();
}

// Model output tends to render booleans as strings; accept both forms.
std::optional<bool> as_bool(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (!v.is_string()) return std::nullopt;
  std::string s = v.get<std::string>();
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "yes") return true;
  if (s == "false" || s == "no") return false;
  return std::nullopt;
}

}  // namespace

TaskSpec parse_task_analysis(std::string_view raw) {
  const std::string original(raw);
  const std::string body = extract_fenced_block(raw, "json").value_or(original);
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw MalformedDocument(e.what(), original);
  }
  if (!doc.is_object()) throw MalformedDocument("expected a JSON object", original);

  TaskSpec t;
  t.task_type = require_text(doc, "Task Type", original);
  t.data_type = require_text(doc, "Data Type", original);
  t.metric_name = require_text(doc, "Metric Name", original);
  if (t.metric_name.empty()) throw MalformedDocument("'Metric Name' is empty", original);

  if (!doc.contains("Metric Direction") || doc.at("Metric Direction").is_null()) {
    throw MissingField("Metric Direction");
  }
  auto direction = as_bool(doc.at("Metric Direction"));
  if (!direction) throw MalformedDocument("'Metric Direction' is not a boolean", original);
  t.higher_is_better = *direction;

  if (doc.contains("Brief Description") && doc.at("Brief Description").is_string()) {
    t.brief_description = doc.at("Brief Description").get<std::string>();
  }
  if (doc.contains("Longer time limit required")) {
    auto longer = as_bool(doc.at("Longer time limit required"));
    if (!longer) throw MalformedDocument("'Longer time limit required' is not a boolean", original);
    t.longer_time_limit = *longer;
  }
  if (doc.contains("workspace_root") && doc.at("workspace_root").is_string()) {
    t.workspace_root = doc.at("workspace_root").get<std::string>();
  }
  if (doc.contains("entrypoint_command") && doc.at("entrypoint_command").is_string()) {
    t.entrypoint_command = doc.at("entrypoint_command").get<std::string>();
  }
  return t;
}

}  // namespace mlagent
