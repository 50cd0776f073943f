#include "mlagent/structured_response.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace mlagent {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

namespace {

struct Fence {
  std::string lang;
  std::string body;
};

std::vector<Fence> fences(std::string_view text) {
  std::vector<Fence> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    std::size_t eol = text.find('\n', open);
    if (eol == std::string_view::npos) break;
    std::string lang = trim(text.substr(open + 3, eol - open - 3));
    std::size_t close = text.find("```", eol + 1);
    if (close == std::string_view::npos) break;
    out.push_back({lang, std::string(text.substr(eol + 1, close - eol - 1))});
    pos = close + 3;
  }
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

std::optional<std::string> extract_fenced_block(std::string_view text, std::string_view lang) {
  for (auto& f : fences(text)) {
    if (lang.empty() || lower(f.lang) == lower(std::string(lang))) return f.body;
  }
  return std::nullopt;
}

std::optional<std::vector<KvRecord>> parse_kv_records(std::string_view text) {
  const std::string body = extract_fenced_block(text, "kv").value_or(std::string(text));
  std::vector<KvRecord> records;
  KvRecord current;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t == "---") {
      if (!current.empty()) records.push_back(std::move(current));
      current.clear();
      continue;
    }
    const auto colon = t.find(':');
    if (colon == std::string::npos || colon == 0) return std::nullopt;
    current[lower(trim(t.substr(0, colon)))] = trim(t.substr(colon + 1));
  }
  if (!current.empty()) records.push_back(std::move(current));
  if (records.empty()) return std::nullopt;
  return records;
}

std::string render_kv_records(const std::vector<KvRecord>& records) {
  std::string out = "```kv\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i) out += "---\n";
    for (const auto& [k, v] : records[i]) out += k + ": " + v + "\n";
  }
  out += "```\n";
  return out;
}

std::string extract_code(std::string_view text) {
  for (auto& f : fences(text)) {
    const std::string l = lower(f.lang);
    if (l != "kv" && l != "json") return f.body;
  }
  return std::string(text);
}

}  // namespace mlagent
