#include "mrex/events.hpp"

#include <stdexcept>

namespace mrex {

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Moved: return "moved";
    case EventKind::CommandRejected: return "command_rejected";
    case EventKind::StuckOnset: return "stuck_onset";
    case EventKind::FallOnset: return "fall_onset";
    case EventKind::BehaviorChanged: return "behavior_changed";
    case EventKind::RecoveryAttempt: return "recovery_attempt";
    case EventKind::RecoverySucceeded: return "recovery_succeeded";
    case EventKind::RadioDeployed: return "radio_deployed";
    case EventKind::RadioJammed: return "radio_jammed";
    case EventKind::RadioInventoryEmpty: return "radio_inventory_empty";
    case EventKind::MessageDropped: return "message_dropped";
    case EventKind::MessageDelivered: return "message_delivered";
    case EventKind::ComponentRestarted: return "component_restarted";
    case EventKind::SupervisorNotified: return "supervisor_notified";
    case EventKind::SupervisorAction: return "supervisor_action";
    case EventKind::Replanned: return "replanned";
  }
  return "unknown";
}

std::string to_jsonl(const SimEvent& ev) {
  nlohmann::json j;
  j["tick"] = ev.tick;
  j["robot"] = ev.robot_id;
  j["kind"] = to_string(ev.kind);
  j["payload"] = ev.payload.is_null() ? nlohmann::json::object() : ev.payload;
  return j.dump();
}

void EventLog::append(SimEvent ev) {
  if (!events_.empty() && ev.tick < events_.back().tick) {
    throw std::logic_error("event log: tick order violated");
  }
  events_.push_back(std::move(ev));
}

void EventLog::append(std::vector<SimEvent> evs) {
  for (auto& e : evs) append(std::move(e));
}

std::uint64_t fnv1a64_bytes(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x00000100000001b3ull;
  }
  return h;
}

std::uint64_t EventLog::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& ev : events_) {
    const std::string line = to_jsonl(ev);
    h = fnv1a64_bytes(line.data(), line.size(), h);
  }
  return h;
}

std::uint64_t EventLog::tick_digest(std::int64_t tick) const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& ev : events_) {
    if (ev.tick != tick) continue;
    const std::string line = to_jsonl(ev);
    h = fnv1a64_bytes(line.data(), line.size(), h);
  }
  return h;
}

}  // namespace mrex
