#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace mlagent {

inline constexpr std::string_view kDebugBlockStart = "=== Start of Debug Information ===";
inline constexpr std::string_view kDebugBlockEnd = "=== End of Debug Information ===";

struct DebugTimes {
  double debug_time_s = 0.0;
  double estimated_time_s = 0.0;
  bool operator==(const DebugTimes&) const = default;
};

/// Parses the last complete debug-information block in `stdout_text`.
/// Throws DebugBlockError (BlockMissing, FieldMissing, NonNumericValue).
DebugTimes parse_debug_block(std::string_view stdout_text);

/// Renders a block that parse_debug_block reads back exactly.
std::string format_debug_block(double debug_time_s, double estimated_time_s);

/// Strict real parse: surrounding blanks allowed, nothing else; rejects
/// non-finite values.
std::optional<double> parse_real(std::string_view text);

/// The last "validation_score: <real>" line a full run printed.
std::optional<double> parse_validation_score(std::string_view stdout_text);

}  // namespace mlagent
