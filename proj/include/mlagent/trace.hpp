#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mlagent/events.hpp"
#include "mlagent/model.hpp"

namespace mlagent {

/// Append-only JSON Lines trace. Every line is flushed to the kernel as it is
/// written; node_committed lines are also fsync'ed so a crash never loses a
/// committed node.
class TraceWriter {
 public:
  /// Opens `path` for appending, creating it when absent.
  explicit TraceWriter(const std::filesystem::path& path);
  ~TraceWriter();
  TraceWriter(const TraceWriter&) = delete;
  TraceWriter& operator=(const TraceWriter&) = delete;

  void write(const TraceEvent& event);
  void sync();
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

struct TraceLine {
  TraceEvent event;
  std::uint64_t end_offset = 0;  // byte offset just past this line
};

/// Strict reader. A line that is not a complete, well-formed event (a torn
/// write, say) raises CorruptTrace naming the loop index of the last node
/// committed before it (-1 when none was).
std::vector<TraceLine> read_trace(const std::filesystem::path& path);

/// Cuts the file back to `size` bytes and syncs it.
void truncate_trace(const std::filesystem::path& path, std::uint64_t size);

/// Graph rebuilt from the node_committed events, in order, with the pruned
/// set of the last commit.
ExplorationGraph replay_graph(const std::vector<TraceLine>& lines);

}  // namespace mlagent
