#include "mrex/netstack.hpp"

#include <algorithm>
#include <cmath>

namespace mrex {

const char* to_string(TrafficClass c) {
  switch (c) {
    case TrafficClass::Key: return "key";
    case TrafficClass::MissionCritical: return "mission_critical";
    case TrafficClass::TimeSensitive: return "time_sensitive";
  }
  return "unknown";
}

TokenBucket::TokenBucket(double rate_bytes_per_s, double burst_bytes)
    : rate_(rate_bytes_per_s), burst_(burst_bytes), tokens_(burst_bytes) {
  if (rate_ < 0 || burst_ < 0) throw std::invalid_argument("token bucket: negative parameter");
}

void TokenBucket::refill(double dt_s) {
  tokens_ = std::min(burst_, tokens_ + rate_ * dt_s);
}

double TokenBucket::take(double want) {
  const double taken = std::min(want, tokens_);
  tokens_ -= taken;
  return taken;
}

Reporter::Reporter(int robot_id, ReporterConfig config)
    : robot_id_(robot_id), config_(std::move(config)) {}

Reporter::Topic& Reporter::topic_state(const std::string& name, TrafficClass cls) {
  auto it = topics_.find(name);
  if (it == topics_.end()) {
    Topic t;
    t.cls = cls;
    t.bucket = TokenBucket(config_.bucket_rate_bytes_per_s, config_.bucket_burst_bytes);
    it = topics_.emplace(name, std::move(t)).first;
  }
  return it->second;
}

std::uint64_t Reporter::next_seq(const std::string& topic) const {
  auto it = topics_.find(topic);
  return it == topics_.end() ? 1 : it->second.next_seq;
}

void Reporter::enqueue(Message msg, std::int64_t tick) {
  if (msg.size_bytes <= 0) throw ProtocolError("enqueue: message size must be > 0");
  Topic& topic = topic_state(msg.topic, msg.cls);
  if (msg.seq != topic.next_seq) {
    throw ProtocolError("enqueue: seq gap on topic " + msg.topic + " (expected " +
                        std::to_string(topic.next_seq) + ", got " + std::to_string(msg.seq) + ")");
  }
  topic.next_seq++;
  msg.size_bytes = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::llround(msg.size_bytes * config_.compression_ratio)));
  topic.unsent.push_back(std::move(msg));

  if (topic.cls == TrafficClass::TimeSensitive &&
      topic.unsent.size() > config_.time_sensitive_queue_limit) {
    const Message dropped = topic.unsent.front();
    topic.unsent.pop_front();
    topic.partial_paid.erase(dropped.seq);
    pending_events_.push_back({tick, robot_id_, EventKind::MessageDropped,
                               {{"topic", dropped.topic},
                                {"seq", dropped.seq},
                                {"bytes", dropped.size_bytes},
                                {"reason", "queue_overflow"}}});
  }
}

void Reporter::service_topic(Topic& topic, double& budget,
                             std::vector<Frame>& out, double now_s, std::int64_t tick) {
  while (!topic.unsent.empty() && budget > 0) {
    Message& head = topic.unsent.front();
    double& paid = topic.partial_paid.try_emplace(head.seq, 0.0).first->second;
    const double remaining = static_cast<double>(head.size_bytes) - paid;
    const double affordable = std::min(budget, topic.bucket.tokens());
    const double pay = std::min(remaining, affordable);
    if (pay <= 0) break;
    topic.bucket.take(pay);
    budget -= pay;
    paid += pay;
    if (paid + 1e-9 < static_cast<double>(head.size_bytes)) break;  // carry over

    topic.partial_paid.erase(head.seq);
    Frame frame{robot_id_, head.topic, head.cls, head.seq, head.size_bytes, tick};
    out.push_back(frame);
    if (topic.cls == TrafficClass::TimeSensitive) {
      topic.unsent.pop_front();  // best-effort: forget once sent
    } else {
      PendingFrame pending{std::move(head), now_s + config_.retransmit_timeout_s};
      topic.unsent.pop_front();
      // Keep unacked sorted by seq; retransmits re-enter in seq order.
      auto pos = std::lower_bound(
          topic.unacked.begin(), topic.unacked.end(), pending.msg.seq,
          [](const PendingFrame& p, std::uint64_t seq) { return p.msg.seq < seq; });
      topic.unacked.insert(pos, std::move(pending));
    }
  }
}

std::vector<Frame> Reporter::transmit_step(double link_budget_bytes, bool link_up, double dt_s,
                                           double now_s, std::int64_t tick) {
  std::vector<Frame> out;
  for (auto& [name, topic] : topics_) topic.bucket.refill(dt_s);

  if (!link_up) {
    // Stale TimeSensitive data is worthless; drop past-TTL messages.
    for (auto& [name, topic] : topics_) {
      if (topic.cls != TrafficClass::TimeSensitive) continue;
      while (!topic.unsent.empty() &&
             static_cast<double>(tick - topic.unsent.front().created_tick) * dt_s >
                 config_.time_sensitive_ttl_s) {
        const Message dropped = topic.unsent.front();
        topic.unsent.pop_front();
        topic.partial_paid.erase(dropped.seq);
        pending_events_.push_back({tick, robot_id_, EventKind::MessageDropped,
                                   {{"topic", dropped.topic},
                                    {"seq", dropped.seq},
                                    {"bytes", dropped.size_bytes},
                                    {"reason", "ttl_expired"}}});
      }
    }
    return out;
  }

  // Expired reliable frames re-enter the head of the send queue.
  for (auto& [name, topic] : topics_) {
    if (topic.cls == TrafficClass::TimeSensitive) continue;
    std::vector<Message> expired;
    while (!topic.unacked.empty() && topic.unacked.front().retransmit_deadline_s <= now_s) {
      expired.push_back(std::move(topic.unacked.front().msg));
      topic.unacked.pop_front();
    }
    // Also sweep non-head expirations (deadlines are monotone per send, but
    // requeues can interleave).
    for (auto it = topic.unacked.begin(); it != topic.unacked.end();) {
      if (it->retransmit_deadline_s <= now_s) {
        expired.push_back(std::move(it->msg));
        it = topic.unacked.erase(it);
      } else {
        ++it;
      }
    }
    if (!expired.empty()) {
      std::sort(expired.begin(), expired.end(),
                [](const Message& a, const Message& b) { return a.seq < b.seq; });
      for (auto it = expired.rbegin(); it != expired.rend(); ++it) {
        topic.unsent.push_front(std::move(*it));
      }
    }
  }

  double budget = link_budget_bytes;
  // Service order: MissionCritical, then Key (seq order within topic), then
  // TimeSensitive. Topic name breaks ties deterministically.
  const TrafficClass order[] = {TrafficClass::MissionCritical, TrafficClass::Key,
                                TrafficClass::TimeSensitive};
  for (TrafficClass cls : order) {
    for (auto& [name, topic] : topics_) {
      if (topic.cls != cls) continue;
      service_topic(topic, budget, out, now_s, tick);
    }
  }
  return out;
}

void Reporter::ack(const std::string& topic_name, std::uint64_t cumulative_seq, double now_s) {
  auto it = topics_.find(topic_name);
  if (it == topics_.end()) return;
  Topic& topic = it->second;
  std::int64_t acked_bytes = 0;
  for (auto p = topic.unacked.begin(); p != topic.unacked.end();) {
    if (p->msg.seq <= cumulative_seq) {
      acked_bytes += p->msg.size_bytes;
      p = topic.unacked.erase(p);
    } else {
      ++p;
    }
  }
  // ACK also covers retransmit copies still waiting in unsent.
  for (auto p = topic.unsent.begin(); p != topic.unsent.end();) {
    if (p->seq <= cumulative_seq) {
      acked_bytes += p->size_bytes;
      topic.partial_paid.erase(p->seq);
      p = topic.unsent.erase(p);
    } else {
      ++p;
    }
  }
  if (acked_bytes > 0) ack_history_.emplace_back(now_s, acked_bytes);
}

std::int64_t Reporter::buffer_size_bytes() const {
  std::int64_t total = 0;
  for (const auto& [name, topic] : topics_) {
    for (const auto& m : topic.unsent) total += m.size_bytes;
    for (const auto& p : topic.unacked) total += p.msg.size_bytes;
  }
  return total;
}

NetStats Reporter::stats(double now_s) const {
  NetStats s;
  s.buffer_size_bytes = buffer_size_bytes();
  std::int64_t windowed = 0;
  for (const auto& [t, bytes] : ack_history_) {
    if (t > now_s - config_.rate_window_s && t <= now_s) windowed += bytes;
  }
  s.measured_rate_bytes_per_s = static_cast<double>(windowed) / config_.rate_window_s;
  if (s.measured_rate_bytes_per_s > 0) {
    s.estimated_transfer_time_s =
        static_cast<double>(s.buffer_size_bytes) / s.measured_rate_bytes_per_s;
  } else {
    s.estimated_transfer_time_s = std::numeric_limits<double>::infinity();
  }
  return s;
}

std::int64_t Reporter::count_unsent_above(const std::string& topic, std::uint64_t cum) const {
  auto it = topics_.find(topic);
  if (it == topics_.end()) return 0;
  std::int64_t n = 0;
  for (const auto& m : it->second.unsent) {
    if (m.seq > cum) ++n;
  }
  return n;
}

std::int64_t Reporter::count_unacked_above(const std::string& topic, std::uint64_t cum) const {
  auto it = topics_.find(topic);
  if (it == topics_.end()) return 0;
  std::int64_t n = 0;
  for (const auto& p : it->second.unacked) {
    if (p.msg.seq > cum) ++n;
  }
  return n;
}

std::vector<std::string> Reporter::topics() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : topics_) out.push_back(name);
  return out;
}

TrafficClass Reporter::topic_class(const std::string& topic) const {
  return topics_.at(topic).cls;
}

std::vector<SimEvent> Reporter::take_events() {
  std::vector<SimEvent> out;
  out.swap(pending_events_);
  return out;
}

std::vector<Frame> Receiver::accept(const Frame& frame) {
  std::vector<Frame> delivered;
  TopicRx& rx = topics_[frame.topic];
  if (frame.cls == TrafficClass::TimeSensitive) {
    // Best effort, no retransmits, so no duplicate filtering needed; deliver
    // immediately in arrival order.
    rx.delivered++;
    delivered.push_back(frame);
    return delivered;
  }
  if (frame.seq <= rx.cum) return delivered;  // duplicate
  rx.out_of_order.emplace(frame.seq, frame);
  while (true) {
    auto it = rx.out_of_order.find(rx.cum + 1);
    if (it == rx.out_of_order.end()) break;
    delivered.push_back(it->second);
    rx.out_of_order.erase(it);
    rx.cum++;
    rx.delivered++;
  }
  return delivered;
}

std::uint64_t Receiver::cumulative_ack(const std::string& topic) const {
  auto it = topics_.find(topic);
  return it == topics_.end() ? 0 : it->second.cum;
}

std::int64_t Receiver::delivered_count(const std::string& topic) const {
  auto it = topics_.find(topic);
  return it == topics_.end() ? 0 : it->second.delivered;
}

std::vector<std::string> Receiver::topics() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : topics_) out.push_back(name);
  return out;
}

}  // namespace mrex
