#include "mlagent/debug_block.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <vector>

#include <fmt/format.h>

#include "mlagent/errors.hpp"
#include "mlagent/structured_response.hpp"

namespace mlagent {

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return lines;
}

// "key: value" with optional blanks; returns the value part when the key matches.
std::optional<std::string_view> field_value(std::string_view line, std::string_view key) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  line.remove_prefix(i);
  if (line.substr(0, key.size()) != key) return std::nullopt;
  line.remove_prefix(key.size());
  std::size_t j = 0;
  while (j < line.size() && (line[j] == ' ' || line[j] == '\t')) ++j;
  if (j >= line.size() || line[j] != ':') return std::nullopt;
  return line.substr(j + 1);
}

}  // namespace

std::optional<double> parse_real(std::string_view text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
  return v;
}

DebugTimes parse_debug_block(std::string_view stdout_text) {
  const auto lines = split_lines(stdout_text);
  // Scan backwards for the last end marker that has a start marker before it.
  std::optional<std::size_t> begin, finish;
  for (std::size_t i = lines.size(); i-- > 0;) {
    if (trim(lines[i]) == kDebugBlockEnd) {
      for (std::size_t k = i; k-- > 0;) {
        const auto t = trim(lines[k]);
        if (t == kDebugBlockStart) {
          begin = k;
          break;
        }
        if (t == kDebugBlockEnd) break;
      }
      if (begin) {
        finish = i;
        break;
      }
    }
  }
  if (!begin) throw DebugBlockError(DebugBlockError::Kind::BlockMissing, "no debug information block in output");

  std::optional<std::string_view> debug_raw, estimate_raw;
  for (std::size_t i = *begin + 1; i < *finish; ++i) {
    if (auto v = field_value(lines[i], "debug_time")) debug_raw = v;
    if (auto v = field_value(lines[i], "estimated_time")) estimate_raw = v;
  }
  if (!debug_raw) throw DebugBlockError(DebugBlockError::Kind::FieldMissing, "debug block has no debug_time");
  if (!estimate_raw) throw DebugBlockError(DebugBlockError::Kind::FieldMissing, "debug block has no estimated_time");
  const auto d = parse_real(*debug_raw);
  if (!d) {
    throw DebugBlockError(DebugBlockError::Kind::NonNumericValue,
                          fmt::format("debug_time '{}' is not a number", trim(*debug_raw)));
  }
  const auto e = parse_real(*estimate_raw);
  if (!e) {
    throw DebugBlockError(DebugBlockError::Kind::NonNumericValue,
                          fmt::format("estimated_time '{}' is not a number", trim(*estimate_raw)));
  }
  return {*d, *e};
}

std::string format_debug_block(double debug_time_s, double estimated_time_s) {
  // fmt's default formatting is the shortest representation that round-trips.
  return fmt::format("{}\ndebug_time: {}\nestimated_time: {}\n{}\n", kDebugBlockStart, debug_time_s,
                     estimated_time_s, kDebugBlockEnd);
}

std::optional<double> parse_validation_score(std::string_view stdout_text) {
  std::optional<double> last;
  for (auto line : split_lines(stdout_text)) {
    if (auto v = field_value(line, "validation_score")) {
      if (auto x = parse_real(*v)) last = x;
    }
  }
  return last;
}

}  // namespace mlagent
