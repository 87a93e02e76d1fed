#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ipaas/bus/envelope.hpp"

namespace ipaas::bus {

struct Subscription {
  std::string topic;
  std::string group;
  std::uint64_t cursor = 0;  // next offset this group will read
};

struct BrokerOptions {
  // When set, every topic log is mirrored to <log_dir>/topic-<name>.log and
  // group cursors to <log_dir>/cursor-<topic>@<group>.
  std::optional<std::filesystem::path> log_dir;
};

/// In-process broker: ordered topic logs with per-group cursors, FIFO
/// point-to-point queues and request-reply over temporary reply queues.
/// All operations are thread-safe; blocking calls only hold the lock of the
/// topic or queue they wait on.
class Broker {
 public:
  Broker();
  explicit Broker(BrokerOptions options);
  ~Broker();

  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  /// Appends to the topic log and returns the offset. Assigns an id and a
  /// timestamp when the envelope carries none. Throws ValidationError on an
  /// empty topic or destination.
  std::uint64_t publish(const std::string& topic, Envelope msg);

  Subscription subscribe(const std::string& topic, const std::string& group);

  /// Up to `max` envelopes from the group cursor; the cursor advances by the
  /// number returned.
  std::vector<Envelope> poll(Subscription& sub, std::size_t max);

  /// Like poll, but waits up to `timeout` for at least one envelope.
  std::vector<Envelope> poll_wait(Subscription& sub, std::size_t max,
                                  std::chrono::milliseconds timeout);

  void send(const std::string& queue, Envelope msg);

  /// Throws TimeoutError when nothing arrives within `timeout`.
  Envelope receive(const std::string& queue, std::chrono::milliseconds timeout);
  std::optional<Envelope> try_receive(const std::string& queue, std::chrono::milliseconds timeout);

  /// Sends `msg` with a "reply-to" header naming a private reply queue and
  /// returns the first reply whose correlation_id equals the request id.
  Envelope request(const std::string& queue, Envelope msg, std::chrono::milliseconds timeout);

  /// Sends `response` to the request's reply-to queue with the correlation id
  /// set. Replies to a requester that already gave up are dropped.
  void reply(const Envelope& request, Envelope response);

  std::uint64_t topic_size(const std::string& topic) const;
  std::size_t queue_depth(const std::string& queue) const;
  std::vector<Envelope> read_topic(const std::string& topic, std::uint64_t from,
                                   std::size_t max) const;
  std::vector<std::string> topics() const;

  std::string next_id();

 private:
  struct Topic;
  struct Queue;

  std::shared_ptr<Topic> topic(const std::string& name, bool create) const;
  std::shared_ptr<Queue> queue(const std::string& name, bool create) const;
  void recover();
  void persist_cursor(const Topic& t, const std::string& group, std::uint64_t cursor) const;
  std::vector<Envelope> take(Topic& t, Subscription& sub, std::size_t max);

  BrokerOptions options_;
  mutable std::mutex registry_mutex_;
  mutable std::map<std::string, std::shared_ptr<Topic>> topics_;
  mutable std::map<std::string, std::shared_ptr<Queue>> queues_;
  std::atomic<std::uint64_t> id_counter_{0};
};

}  // namespace ipaas::bus
