#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mlagent {

/// Minimal RFC 4180 table: quoted fields, doubled quotes, CRLF tolerated.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);  // throws SourceMissing
std::string render_csv(const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);  // throws WriteFailure

std::string read_file(const std::filesystem::path& path);  // throws SourceMissing
void write_file(const std::filesystem::path& path, std::string_view content);  // throws WriteFailure

}  // namespace mlagent
