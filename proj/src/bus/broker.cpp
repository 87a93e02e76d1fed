#include "ipaas/bus/broker.hpp"

#include <cctype>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

namespace ipaas::bus {

namespace fs = std::filesystem;

struct Broker::Topic {
  std::string name;
  std::mutex mutex;
  std::condition_variable cv;
  std::vector<std::shared_ptr<const Envelope>> entries;
  std::map<std::string, std::uint64_t> cursors;
  std::FILE* file = nullptr;

  ~Topic() {
    if (file != nullptr) std::fclose(file);
  }
};

struct Broker::Queue {
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<Envelope> items;
};

namespace {

std::string encode_name(const std::string& name) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : name) {
    if (std::isalnum(c) || c == '.' || c == '_' || c == '-') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 0xF];
    }
  }
  return out;
}

std::string decode_name(const std::string& name) {
  std::string out;
  for (std::size_t i = 0; i < name.size(); ++i) {
    if (name[i] == '%' && i + 2 < name.size()) {
      out += static_cast<char>(std::stoi(name.substr(i + 1, 2), nullptr, 16));
      i += 2;
    } else {
      out += name[i];
    }
  }
  return out;
}

// Reads length-prefixed records; a truncated trailing record is ignored.
std::vector<Envelope> read_log(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<Envelope> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t len = 0;
    try {
      len = std::stoul(line);
    } catch (const std::exception&) {
      spdlog::warn("broker: corrupt length prefix in {}", path.string());
      break;
    }
    std::string body(len, '\0');
    if (!in.read(body.data(), static_cast<std::streamsize>(len))) {
      spdlog::warn("broker: truncated record at end of {}", path.string());
      break;
    }
    in.ignore(1);
    out.push_back(parse_envelope(body));
  }
  return out;
}

void append_record(std::FILE* file, const Envelope& env) {
  const std::string body = serialize(env);
  std::fprintf(file, "%zu\n", body.size());
  std::fwrite(body.data(), 1, body.size(), file);
  std::fputc('\n', file);
  std::fflush(file);
}

}  // namespace

Broker::Broker() : Broker(BrokerOptions{}) {}

Broker::Broker(BrokerOptions options) : options_(std::move(options)) {
  if (options_.log_dir) {
    fs::create_directories(*options_.log_dir);
    recover();
  }
}

Broker::~Broker() = default;

std::string Broker::next_id() { return "m-" + std::to_string(++id_counter_); }

void Broker::recover() {
  std::uint64_t max_id = 0;
  for (const auto& entry : fs::directory_iterator(*options_.log_dir)) {
    const std::string file = entry.path().filename().string();
    if (file.starts_with("topic-") && file.ends_with(".log")) {
      const std::string name = decode_name(file.substr(6, file.size() - 10));
      auto t = topic(name, true);
      for (auto& env : read_log(entry.path())) {
        if (env.id.starts_with("m-")) {
          try {
            max_id = std::max<std::uint64_t>(max_id, std::stoull(env.id.substr(2)));
          } catch (const std::exception&) {
          }
        }
        t->entries.push_back(std::make_shared<const Envelope>(std::move(env)));
      }
    }
  }
  for (const auto& entry : fs::directory_iterator(*options_.log_dir)) {
    const std::string file = entry.path().filename().string();
    if (!file.starts_with("cursor-")) continue;
    const auto at = file.rfind('@');
    if (at == std::string::npos) continue;
    const std::string topic_name = decode_name(file.substr(7, at - 7));
    const std::string group = decode_name(file.substr(at + 1));
    std::ifstream in(entry.path());
    std::uint64_t cursor = 0;
    if (in >> cursor) {
      auto t = topic(topic_name, true);
      t->cursors[group] = std::min<std::uint64_t>(cursor, t->entries.size());
    }
  }
  id_counter_ = max_id;
}

std::shared_ptr<Broker::Topic> Broker::topic(const std::string& name, bool create) const {
  std::lock_guard lock(registry_mutex_);
  auto it = topics_.find(name);
  if (it != topics_.end()) return it->second;
  if (!create) return nullptr;
  auto t = std::make_shared<Topic>();
  t->name = name;
  if (options_.log_dir) {
    const fs::path path = *options_.log_dir / ("topic-" + encode_name(name) + ".log");
    t->file = std::fopen(path.c_str(), "ab");
    if (t->file == nullptr) throw BusError("broker: cannot open log " + path.string());
  }
  topics_.emplace(name, t);
  return t;
}

std::shared_ptr<Broker::Queue> Broker::queue(const std::string& name, bool create) const {
  std::lock_guard lock(registry_mutex_);
  auto it = queues_.find(name);
  if (it != queues_.end()) return it->second;
  if (!create) return nullptr;
  auto q = std::make_shared<Queue>();
  queues_.emplace(name, q);
  return q;
}

std::uint64_t Broker::publish(const std::string& topic_name, Envelope msg) {
  if (topic_name.empty()) throw ValidationError("publish: empty topic name");
  if (msg.destination.empty()) throw ValidationError("publish: envelope has no destination");
  if (msg.id.empty()) msg.id = next_id();
  if (msg.timestamp_ms == 0) msg.timestamp_ms = now_ms();

  auto t = topic(topic_name, true);
  std::uint64_t offset = 0;
  {
    std::lock_guard lock(t->mutex);
    offset = t->entries.size();
    if (t->file != nullptr) append_record(t->file, msg);
    t->entries.push_back(std::make_shared<const Envelope>(std::move(msg)));
  }
  t->cv.notify_all();
  return offset;
}

Subscription Broker::subscribe(const std::string& topic_name, const std::string& group) {
  auto t = topic(topic_name, true);
  std::lock_guard lock(t->mutex);
  auto [it, inserted] = t->cursors.try_emplace(group, 0);
  return Subscription{topic_name, group, it->second};
}

std::vector<Envelope> Broker::take(Topic& t, Subscription& sub, std::size_t max) {
  auto& cursor = t.cursors[sub.group];
  const std::uint64_t end = std::min<std::uint64_t>(t.entries.size(), cursor + max);
  std::vector<Envelope> out;
  out.reserve(end - cursor);
  for (std::uint64_t i = cursor; i < end; ++i) out.push_back(*t.entries[i]);
  if (end != cursor) {
    cursor = end;
    persist_cursor(t, sub.group, cursor);
  }
  sub.cursor = cursor;
  return out;
}

std::vector<Envelope> Broker::poll(Subscription& sub, std::size_t max) {
  if (max == 0) throw ValidationError("poll: max must be at least 1");
  auto t = topic(sub.topic, true);
  std::lock_guard lock(t->mutex);
  return take(*t, sub, max);
}

std::vector<Envelope> Broker::poll_wait(Subscription& sub, std::size_t max,
                                        std::chrono::milliseconds timeout) {
  if (max == 0) throw ValidationError("poll: max must be at least 1");
  auto t = topic(sub.topic, true);
  std::unique_lock lock(t->mutex);
  t->cv.wait_for(lock, timeout, [&] { return t->cursors[sub.group] < t->entries.size(); });
  return take(*t, sub, max);
}

void Broker::persist_cursor(const Topic& t, const std::string& group, std::uint64_t cursor) const {
  if (!options_.log_dir) return;
  const fs::path path =
      *options_.log_dir / ("cursor-" + encode_name(t.name) + "@" + encode_name(group));
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << cursor << '\n';
  }
  fs::rename(tmp, path);
}

void Broker::send(const std::string& queue_name, Envelope msg) {
  if (queue_name.empty()) throw ValidationError("send: empty queue name");
  if (msg.destination.empty()) msg.destination = queue_name;
  if (msg.id.empty()) msg.id = next_id();
  if (msg.timestamp_ms == 0) msg.timestamp_ms = now_ms();
  auto q = queue(queue_name, true);
  {
    std::lock_guard lock(q->mutex);
    q->items.push_back(std::move(msg));
  }
  q->cv.notify_one();
}

std::optional<Envelope> Broker::try_receive(const std::string& queue_name,
                                            std::chrono::milliseconds timeout) {
  auto q = queue(queue_name, true);
  std::unique_lock lock(q->mutex);
  if (!q->cv.wait_for(lock, timeout, [&] { return !q->items.empty(); })) return std::nullopt;
  Envelope env = std::move(q->items.front());
  q->items.pop_front();
  return env;
}

Envelope Broker::receive(const std::string& queue_name, std::chrono::milliseconds timeout) {
  auto env = try_receive(queue_name, timeout);
  if (!env) {
    throw TimeoutError("receive: no message on '" + queue_name + "' within " +
                       std::to_string(timeout.count()) + " ms");
  }
  return std::move(*env);
}

Envelope Broker::request(const std::string& queue_name, Envelope msg,
                         std::chrono::milliseconds timeout) {
  if (timeout.count() <= 0) throw ValidationError("request: timeout must be positive");
  if (msg.id.empty()) msg.id = next_id();
  const std::string request_id = msg.id;
  const std::string reply_queue = "reply." + request_id;
  msg.headers[std::string(kReplyToHeader)] = reply_queue;

  queue(reply_queue, true);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  send(queue_name, std::move(msg));

  std::optional<Envelope> result;
  while (!result) {
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) break;
    auto env = try_receive(reply_queue, remaining);
    if (!env) break;
    if (env->correlation_id == request_id) {
      result = std::move(env);
    } else {
      spdlog::warn("broker: dropping reply with foreign correlation id on {}", reply_queue);
    }
  }
  {
    std::lock_guard lock(registry_mutex_);
    queues_.erase(reply_queue);
  }
  if (!result) {
    throw TimeoutError("request: no reply from '" + queue_name + "' within " +
                       std::to_string(timeout.count()) + " ms");
  }
  return std::move(*result);
}

void Broker::reply(const Envelope& request_msg, Envelope response) {
  const auto reply_to = request_msg.header(kReplyToHeader);
  if (!reply_to) throw ValidationError("reply: request has no reply-to header");
  response.correlation_id = request_msg.id;
  response.destination = *reply_to;
  if (response.id.empty()) response.id = next_id();
  if (response.timestamp_ms == 0) response.timestamp_ms = now_ms();
  auto q = queue(*reply_to, false);
  if (!q) {
    spdlog::debug("broker: late reply for {} dropped", request_msg.id);
    return;
  }
  {
    std::lock_guard lock(q->mutex);
    q->items.push_back(std::move(response));
  }
  q->cv.notify_one();
}

std::uint64_t Broker::topic_size(const std::string& topic_name) const {
  auto t = topic(topic_name, false);
  if (!t) return 0;
  std::lock_guard lock(t->mutex);
  return t->entries.size();
}

std::size_t Broker::queue_depth(const std::string& queue_name) const {
  auto q = queue(queue_name, false);
  if (!q) return 0;
  std::lock_guard lock(q->mutex);
  return q->items.size();
}

std::vector<Envelope> Broker::read_topic(const std::string& topic_name, std::uint64_t from,
                                         std::size_t max) const {
  auto t = topic(topic_name, false);
  if (!t) return {};
  std::lock_guard lock(t->mutex);
  std::vector<Envelope> out;
  for (std::uint64_t i = from; i < t->entries.size() && out.size() < max; ++i) {
    out.push_back(*t->entries[i]);
  }
  return out;
}

std::vector<std::string> Broker::topics() const {
  std::lock_guard lock(registry_mutex_);
  std::vector<std::string> names;
  for (const auto& [name, t] : topics_) names.push_back(name);
  return names;
}

}  // namespace ipaas::bus
