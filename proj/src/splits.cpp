#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "mlagent/csv.hpp"
#include "mlagent/errors.hpp"
#include "mlagent/eval.hpp"
#include "mlagent/json_io.hpp"
#include "mlagent/rng.hpp"

namespace fs = std::filesystem;

namespace mlagent {

std::map<std::string, std::size_t> stratified_allocation(const std::map<std::string, std::size_t>& class_counts,
                                                         std::size_t test_rows) {
  std::size_t total = 0;
  for (const auto& [c, n] : class_counts) total += n;
  std::map<std::string, std::size_t> alloc;
  if (total == 0) return alloc;

  struct Share {
    std::string cls;
    double remainder;
    std::size_t room;
  };
  std::vector<Share> shares;
  std::size_t assigned = 0;
  for (const auto& [c, n] : class_counts) {
    const double exact = static_cast<double>(test_rows) * static_cast<double>(n) / static_cast<double>(total);
    // Every class keeps at least one training row.
    const std::size_t cap = n > 0 ? n - 1 : 0;
    const std::size_t base = std::min(static_cast<std::size_t>(std::floor(exact)), cap);
    alloc[c] = base;
    assigned += base;
    shares.push_back({c, exact - static_cast<double>(base), cap - base});
  }
  // Largest remainder first; class name breaks ties so the result is deterministic.
  std::sort(shares.begin(), shares.end(), [](const Share& a, const Share& b) {
    if (a.remainder != b.remainder) return a.remainder > b.remainder;
    return a.cls < b.cls;
  });
  while (assigned < test_rows) {
    bool progressed = false;
    for (auto& s : shares) {
      if (assigned >= test_rows) break;
      if (s.room == 0) continue;
      ++alloc[s.cls];
      --s.room;
      ++assigned;
      progressed = true;
    }
    if (!progressed) break;
  }
  return alloc;
}

SplitManifest prepare_splits(const SplitOptions& options) {
  if (!fs::is_regular_file(options.source_file)) {
    throw SourceMissing("task data not found: " + options.source_file.string());
  }
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
    throw InvalidArgument("train_fraction must lie in (0, 1)");
  }
  const CsvTable data = read_csv(options.source_file);
  const auto id_col = data.column(options.id_column);
  const auto target_col = data.column(options.target_column);
  if (!id_col) throw SourceMissing(fmt::format("column '{}' missing from {}", options.id_column, options.source_file.string()));
  if (!target_col) {
    throw SourceMissing(fmt::format("column '{}' missing from {}", options.target_column, options.source_file.string()));
  }
  const std::size_t n = data.rows.size();
  if (n < 2) throw SourceMissing("task data needs at least two rows");
  for (const auto& row : data.rows) {
    if (row.size() != data.header.size()) throw MalformedDocument("ragged CSV row", options.source_file.string());
  }

  const auto test_rows = static_cast<std::size_t>(std::llround((1.0 - options.train_fraction) * static_cast<double>(n)));
  const std::size_t test_target = std::clamp<std::size_t>(test_rows, 1, n - 1);

  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[data.rows[i][*target_col]].push_back(i);

  Rng rng(derive_seed(options.seed, {fnv1a("split")}));
  auto shuffle = [&rng](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.below(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  };

  SplitManifest m;
  m.train_fraction = options.train_fraction;
  m.seed = options.seed;
  m.id_column = options.id_column;
  m.target_column = options.target_column;
  std::vector<bool> in_test(n, false);
  const bool stratify = by_class.size() >= 2 && by_class.size() <= options.max_stratify_classes;
  if (stratify) {
    std::map<std::string, std::size_t> counts;
    for (const auto& [c, rows] : by_class) counts[c] = rows.size();
    const auto alloc = stratified_allocation(counts, test_target);
    std::size_t placed = 0;
    for (auto& [c, rows] : by_class) {
      shuffle(rows);
      for (std::size_t k = 0; k < alloc.at(c); ++k) in_test[rows[k]] = true;
      placed += alloc.at(c);
    }
    m.stratified = placed == test_target;
    if (m.stratified) {
      m.class_column = options.target_column;
    } else {
      std::fill(in_test.begin(), in_test.end(), false);
    }
  }
  if (!m.stratified) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    shuffle(all);
    for (std::size_t k = 0; k < test_target; ++k) in_test[all[k]] = true;
  }

  m.public_dir = fs::absolute(options.out_dir / "public");
  m.private_dir = fs::absolute(options.out_dir / "private");
  m.label_file = m.private_dir / "label.csv";
  std::error_code ec;
  fs::create_directories(m.public_dir, ec);
  if (!ec) fs::create_directories(m.private_dir, ec);
  if (ec) throw WriteFailure(fmt::format("cannot create split directories: {}", ec.message()));

  CsvTable train{data.header, {}};
  CsvTable test;
  CsvTable labels{{options.id_column, options.target_column}, {}};
  CsvTable sample{{options.id_column, options.target_column}, {}};
  for (std::size_t c = 0; c < data.header.size(); ++c) {
    if (c != *target_col) test.header.push_back(data.header[c]);
  }
  // The sample must never reproduce label.csv, which it would if every
  // holdout label equalled the placeholder.
  std::string placeholder = data.rows[0][*target_col];
  bool all_same = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (in_test[i] && data.rows[i][*target_col] != placeholder) all_same = false;
  }
  if (all_same) placeholder = placeholder == "0" ? "1" : "0";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = data.rows[i];
    if (!in_test[i]) {
      train.rows.push_back(row);
      continue;
    }
    std::vector<std::string> features;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c != *target_col) features.push_back(row[c]);
    }
    test.rows.push_back(std::move(features));
    labels.rows.push_back({row[*id_col], row[*target_col]});
    sample.rows.push_back({row[*id_col], placeholder});
  }
  write_csv(m.public_dir / "train.csv", train);
  write_csv(m.public_dir / "test.csv", test);
  write_csv(m.public_dir / "sample_submission.csv", sample);
  write_csv(m.label_file, labels);
  m.train_rows = train.rows.size();
  m.test_rows = test.rows.size();
  return m;
}

void save_manifest(const SplitManifest& m, const fs::path& path) {
  json j{{"train_fraction", m.train_fraction},
         {"stratified", m.stratified},
         {"class_column", m.class_column ? json(*m.class_column) : json(nullptr)},
         {"seed", m.seed},
         {"id_column", m.id_column},
         {"target_column", m.target_column},
         {"public_dir", m.public_dir.string()},
         {"private_dir", m.private_dir.string()},
         {"label_file", m.label_file.string()},
         {"train_rows", m.train_rows},
         {"test_rows", m.test_rows}};
  write_file(path, j.dump(2) + "\n");
}

SplitManifest load_manifest(const fs::path& path) {
  const std::string raw = read_file(path);
  json j;
  try {
    j = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw MalformedDocument(e.what(), raw);
  }
  SplitManifest m;
  m.train_fraction = j.at("train_fraction").get<double>();
  m.stratified = j.at("stratified").get<bool>();
  if (!j.at("class_column").is_null()) m.class_column = j.at("class_column").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.id_column = j.at("id_column").get<std::string>();
  m.target_column = j.at("target_column").get<std::string>();
  m.public_dir = j.at("public_dir").get<std::string>();
  m.private_dir = j.at("private_dir").get<std::string>();
  m.label_file = j.at("label_file").get<std::string>();
  m.train_rows = j.at("train_rows").get<std::size_t>();
  m.test_rows = j.at("test_rows").get<std::size_t>();
  return m;
}

}  // namespace mlagent
