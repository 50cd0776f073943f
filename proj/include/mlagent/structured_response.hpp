#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mlagent {

using KvRecord = std::map<std::string, std::string>;

/// Contents of the first ```<lang> fenced block. An empty `lang` matches any
/// fence.
std::optional<std::string> extract_fenced_block(std::string_view text, std::string_view lang = {});

/// Parses the key/value contract used by every reasoning step: a ```kv block
/// of "key: value" lines, records separated by a line of "---". Keys are
/// lower-cased. Returns nullopt when no well-formed record is found.
std::optional<std::vector<KvRecord>> parse_kv_records(std::string_view text);

/// Renders records in the same contract (used by offline backends and tests).
std::string render_kv_records(const std::vector<KvRecord>& records);

/// The solution source in a drafting response: the first fenced block that is
/// not a kv/json block, or the whole response when unfenced.
std::string extract_code(std::string_view text);

std::string trim(std::string_view s);

}  // namespace mlagent
