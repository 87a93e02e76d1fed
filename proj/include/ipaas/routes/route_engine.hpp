#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "ipaas/bus/broker.hpp"
#include "ipaas/routes/processors.hpp"

namespace ipaas::routes {

class RouteDefinitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// scheme:name[?key=value&...]
struct Endpoint {
  std::string scheme;
  std::string name;
  std::map<std::string, std::string> params;

  static Endpoint parse(const std::string& ref);
  std::string str() const { return scheme + ":" + name; }
};

struct RouteDefinition {
  std::string name;
  std::string from;
  std::vector<ProcessorStep> steps;
  std::optional<std::string> to;
};

RouteDefinition route_from_json(const Document& j);
Document route_to_json(const RouteDefinition& def);
/// Accepts {"routes": [...]} or a bare array of route objects.
std::vector<RouteDefinition> routes_from_json(const Document& doc);
std::vector<RouteDefinition> load_routes(const std::filesystem::path& path);

struct RouteStats {
  std::uint64_t received = 0;
  std::uint64_t delivered = 0;      // to-endpoint or content-route destination
  std::uint64_t dead_lettered = 0;
  std::uint64_t filtered = 0;
  std::uint64_t absorbed = 0;       // held by an aggregator
};

/// Sink for a custom endpoint scheme, e.g. "engine:<node>".
using Sink = std::function<void(const std::string& name, const bus::Envelope&)>;

/// Owns route definitions and the threads running them. Endpoint schemes:
/// topic, queue and timer (consumers); topic, queue, service, model and any
/// registered sink scheme (producers). Step failures go to queue "dlq" with
/// an "error" header.
class RouteEngine {
 public:
  explicit RouteEngine(bus::Broker& broker);
  ~RouteEngine();

  RouteEngine(const RouteEngine&) = delete;
  RouteEngine& operator=(const RouteEngine&) = delete;

  void register_service(const std::string& name, Service service);
  /// model:<name> resolves to request-reply on `queue`.
  void register_model(const std::string& name, const std::string& queue,
                      std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));
  void register_sink(const std::string& scheme, Sink sink);

  /// Validates and stores the route; it stays idle until start().
  std::string register_route(RouteDefinition def);

  void start();
  void stop();
  bool running() const { return running_; }

  /// Runs one envelope through a route on the calling thread.
  void process(const std::string& route, bus::Envelope env);
  /// Flushes aggregation buckets whose timeout has passed.
  void tick(const std::string& route);

  RouteStats stats(const std::string& route) const;
  std::vector<std::string> route_names() const;

 private:
  struct Route;

  void validate(const RouteDefinition& def) const;
  bool resolvable_producer(const std::string& ref) const;
  Route& route(const std::string& name) const;
  void run(Route& r);
  void execute(Route& r, Exchange exchange, std::size_t first_step);
  void deliver(const std::string& ref, const bus::Envelope& env);
  Document call(const std::string& ref, const bus::Envelope& env);
  void dead_letter(Route& r, const bus::Envelope& env, const std::string& error);

  bus::Broker& broker_;
  std::map<std::string, Service> services_;
  std::map<std::string, std::pair<std::string, std::chrono::milliseconds>> models_;
  std::map<std::string, Sink> sinks_;
  std::map<std::string, std::unique_ptr<Route>> routes_;
  std::vector<std::string> order_;
  std::atomic<bool> running_{false};
  mutable std::mutex mutex_;
};

}  // namespace ipaas::routes
