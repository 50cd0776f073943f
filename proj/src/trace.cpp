#include "mlagent/trace.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "mlagent/errors.hpp"
#include "mlagent/json_io.hpp"

namespace fs = std::filesystem;

namespace mlagent {

TraceWriter::TraceWriter(const fs::path& path) : path_(path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw WriteFailure(fmt::format("cannot open trace {}: {}", path.string(), std::strerror(errno)));
}

TraceWriter::~TraceWriter() {
  if (fd_ >= 0) ::close(fd_);
}

void TraceWriter::write(const TraceEvent& event) {
  std::string line = to_json_line(event).dump();
  line.push_back('\n');
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    const ssize_t n = ::write(fd_, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw WriteFailure(fmt::format("cannot append to trace {}: {}", path_.string(), std::strerror(errno)));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  if (event.kind == EventKind::NodeCommitted) sync();
}

void TraceWriter::sync() {
  if (::fsync(fd_) != 0) throw WriteFailure(fmt::format("fsync failed on {}", path_.string()));
}

std::vector<TraceLine> read_trace(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SourceMissing(fmt::format("cannot read trace {}", path.string()));
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::vector<TraceLine> out;
  long last_loop = -1;
  std::size_t pos = 0;
  long line_no = 0;
  while (pos < data.size()) {
    ++line_no;
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      throw CorruptTrace(fmt::format("line {} is truncated", line_no), last_loop);
    }
    const std::string_view text(data.data() + pos, nl - pos);
    TraceEvent ev;
    try {
      ev = event_from_json(json::parse(text));
      if (ev.kind == EventKind::NodeCommitted) {
        last_loop = ev.payload.at("node").at("loop_index").get<long>();
      }
    } catch (const json::exception& e) {
      throw CorruptTrace(fmt::format("line {}: {}", line_no, e.what()), last_loop);
    } catch (const Error& e) {
      throw CorruptTrace(fmt::format("line {}: {}", line_no, e.what()), last_loop);
    }
    pos = nl + 1;
    out.push_back({std::move(ev), pos});
  }
  return out;
}

void truncate_trace(const fs::path& path, std::uint64_t size) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CLOEXEC);
  if (fd < 0) throw WriteFailure(fmt::format("cannot open trace {}", path.string()));
  const bool ok = ::ftruncate(fd, static_cast<off_t>(size)) == 0 && ::fsync(fd) == 0;
  ::close(fd);
  if (!ok) throw WriteFailure(fmt::format("cannot truncate trace {}", path.string()));
}

ExplorationGraph replay_graph(const std::vector<TraceLine>& lines) {
  ExplorationGraph g;
  for (const auto& l : lines) {
    if (l.event.kind != EventKind::NodeCommitted) continue;
    g.restore(l.event.payload.at("node").get<Node>());
    if (l.event.payload.contains("pruned")) {
      const auto p = l.event.payload.at("pruned").get<std::vector<BranchId>>();
      g.set_pruned({p.begin(), p.end()});
    }
  }
  return g;
}

}  // namespace mlagent
