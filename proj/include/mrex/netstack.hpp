#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrex/events.hpp"

namespace mrex {

enum class TrafficClass { Key, MissionCritical, TimeSensitive };
const char* to_string(TrafficClass c);

struct ProtocolError : std::logic_error {
  using std::logic_error::logic_error;
};

struct Message {
  std::string topic;
  TrafficClass cls = TrafficClass::Key;
  std::int64_t size_bytes = 0;
  std::uint64_t seq = 0;  // per-topic, strictly increasing from 1
  std::int64_t created_tick = 0;
};

// A message fully paid onto the wire this tick.
struct Frame {
  int src_robot = 0;
  std::string topic;
  TrafficClass cls = TrafficClass::Key;
  std::uint64_t seq = 0;
  std::int64_t size_bytes = 0;
  std::int64_t sent_tick = 0;
};

class TokenBucket {
 public:
  TokenBucket() = default;
  TokenBucket(double rate_bytes_per_s, double burst_bytes);

  void refill(double dt_s);
  double tokens() const { return tokens_; }
  double rate() const { return rate_; }
  double burst() const { return burst_; }
  // Consumes up to `want` tokens, returns the amount actually taken.
  double take(double want);

 private:
  double rate_ = 0.0;
  double burst_ = 0.0;
  double tokens_ = 0.0;
};

struct ReporterConfig {
  double bucket_rate_bytes_per_s = 20000.0;
  double bucket_burst_bytes = 40000.0;
  double retransmit_timeout_s = 2.0;
  std::size_t time_sensitive_queue_limit = 32;
  double time_sensitive_ttl_s = 10.0;
  double rate_window_s = 10.0;
  double compression_ratio = 1.0;  // size multiplier applied at enqueue
};

struct NetStats {
  std::int64_t buffer_size_bytes = 0;
  double measured_rate_bytes_per_s = 0.0;
  double estimated_transfer_time_s = std::numeric_limits<double>::infinity();
};

// Per-robot outbound data reporter: per-topic queues for the three traffic
// classes, cumulative-ACK reliability for Key and MissionCritical, token
// bucket rate limiting per topic, and the buffer statistics that drive
// mission-level decisions.
class Reporter {
 public:
  Reporter(int robot_id, ReporterConfig config);

  int robot_id() const { return robot_id_; }
  const ReporterConfig& config() const { return config_; }

  // seq must be exactly the topic's next value; TimeSensitive topics are
  // bounded and evict their oldest message on overflow.
  void enqueue(Message msg, std::int64_t tick);

  // Next per-topic sequence number (messages carry their own seq so callers
  // and tests can drive the protocol directly).
  std::uint64_t next_seq(const std::string& topic) const;

  // One transmission opportunity: refills buckets, requeues expired unacked
  // frames, then services topics MissionCritical -> Key -> TimeSensitive
  // within link_budget_bytes. With the link down nothing is sent and stale
  // TimeSensitive messages are dropped.
  std::vector<Frame> transmit_step(double link_budget_bytes, bool link_up, double dt_s,
                                   double now_s, std::int64_t tick);

  // Cumulative ACK: discharges all unacked frames with seq <= cumulative_seq.
  void ack(const std::string& topic, std::uint64_t cumulative_seq, double now_s);

  NetStats stats(double now_s) const;
  std::int64_t buffer_size_bytes() const;

  // Unsent + unacked message counts with seq above the given receiver
  // cursor; used by the metrics conservation check.
  std::int64_t count_unsent_above(const std::string& topic, std::uint64_t cum) const;
  std::int64_t count_unacked_above(const std::string& topic, std::uint64_t cum) const;
  std::vector<std::string> topics() const;
  TrafficClass topic_class(const std::string& topic) const;

  // Drains events (drops, protocol notes) accumulated since the last call.
  std::vector<SimEvent> take_events();

 private:
  struct PendingFrame {
    Message msg;
    double retransmit_deadline_s = 0.0;
  };
  struct Topic {
    TrafficClass cls = TrafficClass::Key;
    std::deque<Message> unsent;
    std::deque<PendingFrame> unacked;
    TokenBucket bucket;
    std::uint64_t next_seq = 1;
    // Bytes already paid toward not-yet-emitted frames, by seq. Progress
    // survives retransmits jumping the queue; entries clear on emission,
    // ACK, or eviction.
    std::map<std::uint64_t, double> partial_paid;
  };

  Topic& topic_state(const std::string& name, TrafficClass cls);
  void service_topic(Topic& topic, double& budget, std::vector<Frame>& out,
                     double now_s, std::int64_t tick);

  int robot_id_;
  ReporterConfig config_;
  std::map<std::string, Topic> topics_;
  std::deque<std::pair<double, std::int64_t>> ack_history_;  // (time, bytes)
  std::vector<SimEvent> pending_events_;
};

// Base-side per-robot receive state: exactly-once in-order delivery for
// reliable classes via a reorder buffer and cumulative ACKs; best-effort
// immediate delivery for TimeSensitive.
class Receiver {
 public:
  // Frames delivered (in order for reliable classes) as a result of
  // accepting this frame; duplicates deliver nothing.
  std::vector<Frame> accept(const Frame& frame);

  std::uint64_t cumulative_ack(const std::string& topic) const;
  std::int64_t delivered_count(const std::string& topic) const;
  std::vector<std::string> topics() const;

 private:
  struct TopicRx {
    std::uint64_t cum = 0;  // highest contiguously delivered seq
    std::map<std::uint64_t, Frame> out_of_order;
    std::int64_t delivered = 0;
  };
  std::map<std::string, TopicRx> topics_;
};

}  // namespace mrex
