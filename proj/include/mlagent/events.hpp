#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mlagent/json_io.hpp"

namespace mlagent {

enum class EventKind {
  LoopStart,
  Plan,
  Pool,
  Selection,
  Draft,
  Debug,
  FullRun,
  Grade,
  NodeCommitted,
  Merge,
  FinalSubmit,
  BackendCall,
};

std::string_view to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view s);

struct TraceEvent {
  std::string timestamp;
  EventKind kind = EventKind::LoopStart;
  long round = -1;
  BranchId branch = -1;
  json payload;
};

json to_json_line(const TraceEvent& e);
TraceEvent event_from_json(const json& j);

/// Per-loop event buffer. Workers fill their own buffer; the coordinator
/// flushes buffers to the trace in a fixed order so replays are reproducible.
class EventBuffer {
 public:
  EventBuffer(long round, BranchId branch) : round_(round), branch_(branch) {}
  void emit(EventKind kind, json payload);
  const std::vector<TraceEvent>& events() const { return events_; }
  std::vector<TraceEvent> take() { return std::move(events_); }
  long round() const { return round_; }
  BranchId branch() const { return branch_; }

 private:
  long round_;
  BranchId branch_;
  std::vector<TraceEvent> events_;
};

}  // namespace mlagent
