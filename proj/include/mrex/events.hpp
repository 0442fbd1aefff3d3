#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace mrex {

enum class EventKind {
  Moved,
  CommandRejected,
  StuckOnset,
  FallOnset,
  BehaviorChanged,
  RecoveryAttempt,
  RecoverySucceeded,
  RadioDeployed,
  RadioJammed,
  RadioInventoryEmpty,
  MessageDropped,
  MessageDelivered,
  ComponentRestarted,
  SupervisorNotified,
  SupervisorAction,
  Replanned,
};

const char* to_string(EventKind kind);

// One record per state transition anywhere in the simulator. robot_id is -1
// for system-level events.
struct SimEvent {
  std::int64_t tick = 0;
  int robot_id = -1;
  EventKind kind = EventKind::Moved;
  nlohmann::json payload;
};

// Canonical single-line JSON; nlohmann orders object keys, so equal events
// serialize byte-identically.
std::string to_jsonl(const SimEvent& ev);

class EventLog {
 public:
  // Ticks must be nondecreasing.
  void append(SimEvent ev);
  void append(std::vector<SimEvent> evs);

  const std::vector<SimEvent>& events() const { return events_; }
  bool empty() const { return events_.empty(); }
  std::size_t size() const { return events_.size(); }

  // FNV-1a over the serialized lines.
  std::uint64_t digest() const;
  // Digest restricted to one tick's events.
  std::uint64_t tick_digest(std::int64_t tick) const;

 private:
  std::vector<SimEvent> events_;
};

std::uint64_t fnv1a64_bytes(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace mrex
