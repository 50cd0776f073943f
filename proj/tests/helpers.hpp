#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mlagent/model.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("mlagent-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline mlagent::ScoreRecord score(double v, bool higher = true, std::string metric = "accuracy") {
  mlagent::ScoreRecord s;
  s.value = v;
  s.metric_name = std::move(metric);
  s.higher_is_better = higher;
  return s;
}

/// Commits a node; an absent score makes it a failed node.
inline const mlagent::Node& add_node(mlagent::ExplorationGraph& g, mlagent::BranchId branch,
                                     std::optional<double> value, std::vector<mlagent::NodeId> parents = {},
                                     std::string text = {}, bool higher = true) {
  mlagent::Node n;
  n.branch_id = branch;
  n.parent_ids = std::move(parents);
  n.hypothesis.text = text.empty() ? "hypothesis " + std::to_string(g.next_id()) : std::move(text);
  if (value) {
    n.score = score(*value, higher);
    n.status = mlagent::NodeStatus::Executed;
  } else {
    n.status = mlagent::NodeStatus::Failed;
  }
  return g.commit(std::move(n));
}

}  // namespace testing
