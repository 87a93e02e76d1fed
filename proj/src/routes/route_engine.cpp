#include "ipaas/routes/route_engine.hpp"

#include <fstream>

#include <spdlog/spdlog.h>

namespace ipaas::routes {

namespace {

constexpr auto kIdleWait = std::chrono::milliseconds(20);
constexpr std::size_t kBatch = 32;

std::chrono::milliseconds param_ms(const Endpoint& ep, const std::string& key,
                                   std::chrono::milliseconds fallback) {
  auto it = ep.params.find(key);
  if (it == ep.params.end()) return fallback;
  return std::chrono::milliseconds(std::stoll(it->second));
}

}  // namespace

Endpoint Endpoint::parse(const std::string& ref) {
  const auto colon = ref.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == ref.size()) {
    throw RouteDefinitionError("endpoint '" + ref + "' is not of the form scheme:name");
  }
  Endpoint ep;
  ep.scheme = ref.substr(0, colon);
  std::string rest = ref.substr(colon + 1);
  const auto q = rest.find('?');
  ep.name = rest.substr(0, q);
  if (q != std::string::npos) {
    std::string query = rest.substr(q + 1);
    std::size_t start = 0;
    while (start < query.size()) {
      auto amp = query.find('&', start);
      if (amp == std::string::npos) amp = query.size();
      const std::string kv = query.substr(start, amp - start);
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        ep.params[kv] = "";
      } else {
        ep.params[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      start = amp + 1;
    }
  }
  if (ep.name.empty()) throw RouteDefinitionError("endpoint '" + ref + "' has an empty name");
  return ep;
}

// --- definitions ------------------------------------------------------------

RouteDefinition route_from_json(const Document& j) {
  RouteDefinition def;
  try {
    def.name = j.at("name").get<std::string>();
    def.from = j.at("from").get<std::string>();
    if (j.contains("to") && !j.at("to").is_null()) def.to = j.at("to").get<std::string>();
    for (const auto& s : j.value("steps", Document::array())) {
      const std::string kind = s.at("kind").get<std::string>();
      ProcessorStep step;
      if (kind == "translate") {
        TranslateConfig c;
        for (const auto& m : s.value("mappings", Document::array())) {
          c.mappings.push_back({m.at("from").get<std::string>(), m.at("to").get<std::string>(),
                                m.value("optional", false)});
        }
        c.pass_through = s.value("pass_through", false);
        step.config = std::move(c);
      } else if (kind == "content-route") {
        ContentRouteConfig c;
        for (const auto& r : s.value("rules", Document::array())) {
          c.rules.push_back({condition_from_json(r.at("when")), r.at("to").get<std::string>()});
        }
        c.default_destination = s.value("default", "");
        step.config = std::move(c);
      } else if (kind == "aggregate") {
        AggregateConfig c;
        c.key = s.at("key").get<std::string>();
        c.completion = s.at("completion").get<std::size_t>();
        c.timeout = std::chrono::milliseconds(s.value("timeout_ms", 1000));
        step.config = std::move(c);
      } else if (kind == "enrich") {
        step.config = EnrichConfig{s.at("source").get<std::string>(), s.value("into", "")};
      } else if (kind == "filter") {
        step.config = FilterConfig{condition_from_json(s.at("when"))};
      } else {
        throw RouteDefinitionError("route '" + def.name + "': unknown step kind '" + kind + "'");
      }
      def.steps.push_back(std::move(step));
    }
  } catch (const Document::exception& e) {
    throw RouteDefinitionError(std::string("malformed route definition: ") + e.what());
  } catch (const PredicateError& e) {
    throw RouteDefinitionError(std::string("malformed route predicate: ") + e.what());
  }
  return def;
}

Document route_to_json(const RouteDefinition& def) {
  Document j;
  j["name"] = def.name;
  j["from"] = def.from;
  j["steps"] = Document::array();
  for (const auto& step : def.steps) {
    Document s;
    s["kind"] = step.kind();
    std::visit(
        [&](const auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, TranslateConfig>) {
            s["mappings"] = Document::array();
            for (const auto& m : c.mappings) {
              s["mappings"].push_back({{"from", m.from}, {"to", m.to}, {"optional", m.optional}});
            }
            s["pass_through"] = c.pass_through;
          } else if constexpr (std::is_same_v<T, ContentRouteConfig>) {
            s["rules"] = Document::array();
            for (const auto& r : c.rules) {
              s["rules"].push_back({{"when", condition_to_json(r.when)}, {"to", r.destination}});
            }
            s["default"] = c.default_destination;
          } else if constexpr (std::is_same_v<T, AggregateConfig>) {
            s["key"] = c.key;
            s["completion"] = c.completion;
            s["timeout_ms"] = c.timeout.count();
          } else if constexpr (std::is_same_v<T, EnrichConfig>) {
            s["source"] = c.source;
            s["into"] = c.into;
          } else if constexpr (std::is_same_v<T, FilterConfig>) {
            s["when"] = condition_to_json(c.when);
          }
        },
        step.config);
    j["steps"].push_back(std::move(s));
  }
  if (def.to) j["to"] = *def.to;
  return j;
}

std::vector<RouteDefinition> routes_from_json(const Document& doc) {
  const Document& list = doc.is_object() ? doc.at("routes") : doc;
  if (!list.is_array()) throw RouteDefinitionError("route document must hold an array of routes");
  std::vector<RouteDefinition> out;
  for (const auto& j : list) out.push_back(route_from_json(j));
  return out;
}

std::vector<RouteDefinition> load_routes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RouteDefinitionError("cannot open route file " + path.string());
  try {
    return routes_from_json(Document::parse(in));
  } catch (const Document::parse_error& e) {
    throw RouteDefinitionError("route file " + path.string() + ": " + e.what());
  }
}

// --- engine -------------------------------------------------------------------

struct RouteEngine::Route {
  RouteDefinition def;
  Endpoint from;
  std::map<std::size_t, Aggregator> aggregators;
  RouteStats stats;
  mutable std::mutex mutex;
  std::thread thread;
};

RouteEngine::RouteEngine(bus::Broker& broker) : broker_(broker) {}

RouteEngine::~RouteEngine() { stop(); }

void RouteEngine::register_service(const std::string& name, Service service) {
  std::lock_guard lock(mutex_);
  services_[name] = std::move(service);
}

void RouteEngine::register_model(const std::string& name, const std::string& queue,
                                 std::chrono::milliseconds timeout) {
  std::lock_guard lock(mutex_);
  models_[name] = {queue, timeout};
}

void RouteEngine::register_sink(const std::string& scheme, Sink sink) {
  std::lock_guard lock(mutex_);
  sinks_[scheme] = std::move(sink);
}

bool RouteEngine::resolvable_producer(const std::string& ref) const {
  const Endpoint ep = Endpoint::parse(ref);
  if (ep.scheme == "topic" || ep.scheme == "queue") return true;
  if (ep.scheme == "service") return services_.contains(ep.name);
  if (ep.scheme == "model") return models_.contains(ep.name);
  return sinks_.contains(ep.scheme);
}

void RouteEngine::validate(const RouteDefinition& def) const {
  if (def.name.empty()) throw RouteDefinitionError("route name is empty");
  if (def.steps.empty() && !def.to) {
    throw RouteDefinitionError("route '" + def.name + "' has neither steps nor a to-endpoint");
  }
  const Endpoint from = Endpoint::parse(def.from);
  if (from.scheme != "topic" && from.scheme != "queue" && from.scheme != "timer") {
    throw RouteDefinitionError("route '" + def.name + "': cannot consume from '" + def.from + "'");
  }
  auto require = [&](const std::string& ref) {
    if (!resolvable_producer(ref)) {
      throw RouteDefinitionError("route '" + def.name + "': unresolvable endpoint '" + ref + "'");
    }
  };
  if (def.to) require(*def.to);
  for (const auto& step : def.steps) {
    std::visit(
        [&](const auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, TranslateConfig>) {
            if (c.mappings.empty() && !c.pass_through) {
              throw RouteDefinitionError("route '" + def.name + "': translate has no mappings");
            }
          } else if constexpr (std::is_same_v<T, ContentRouteConfig>) {
            if (c.rules.empty() || c.default_destination.empty()) {
              throw RouteDefinitionError("route '" + def.name +
                                         "': content-route needs a rule and a default");
            }
            for (const auto& r : c.rules) require(r.destination);
            require(c.default_destination);
          } else if constexpr (std::is_same_v<T, AggregateConfig>) {
            if (c.completion < 1 || c.key.empty()) {
              throw RouteDefinitionError("route '" + def.name + "': invalid aggregate config");
            }
          } else if constexpr (std::is_same_v<T, EnrichConfig>) {
            const Endpoint src = Endpoint::parse(c.source);
            if (src.scheme != "service" && src.scheme != "model") {
              throw RouteDefinitionError("route '" + def.name + "': enrich source must be a service or model");
            }
            require(c.source);
          } else if constexpr (std::is_same_v<T, FilterConfig>) {
            if (c.when.empty()) {
              throw RouteDefinitionError("route '" + def.name + "': filter has no predicate");
            }
          }
        },
        step.config);
  }
}

std::string RouteEngine::register_route(RouteDefinition def) {
  std::lock_guard lock(mutex_);
  if (running_) throw RouteDefinitionError("routes cannot be registered while running");
  if (routes_.contains(def.name)) {
    throw RouteDefinitionError("duplicate route name '" + def.name + "'");
  }
  validate(def);
  auto r = std::make_unique<Route>();
  r->from = Endpoint::parse(def.from);
  for (std::size_t i = 0; i < def.steps.size(); ++i) {
    if (const auto* agg = std::get_if<AggregateConfig>(&def.steps[i].config)) {
      r->aggregators.emplace(i, Aggregator(*agg));
    }
  }
  r->def = std::move(def);
  const std::string name = r->def.name;
  order_.push_back(name);
  routes_.emplace(name, std::move(r));
  return name;
}

RouteEngine::Route& RouteEngine::route(const std::string& name) const {
  std::lock_guard lock(mutex_);
  auto it = routes_.find(name);
  if (it == routes_.end()) throw RouteDefinitionError("unknown route '" + name + "'");
  return *it->second;
}

void RouteEngine::start() {
  std::lock_guard lock(mutex_);
  if (running_) return;
  running_ = true;
  for (auto& [name, r] : routes_) {
    Route* route = r.get();
    route->thread = std::thread([this, route] { run(*route); });
  }
}

void RouteEngine::stop() {
  {
    std::lock_guard lock(mutex_);
    if (!running_) return;
    running_ = false;
  }
  for (auto& [name, r] : routes_) {
    if (r->thread.joinable()) r->thread.join();
  }
}

void RouteEngine::run(Route& r) {
  const Endpoint& from = r.from;
  std::optional<bus::Subscription> sub;
  if (from.scheme == "topic") sub = broker_.subscribe(from.name, "route:" + r.def.name);

  const auto period = param_ms(from, "period", std::chrono::milliseconds(1000));
  const long long repeat = from.params.contains("repeat") ? std::stoll(from.params.at("repeat")) : -1;
  long long fired = 0;
  auto next_fire = std::chrono::steady_clock::now() + period;

  while (running_) {
    auto wait = kIdleWait;
    {
      std::lock_guard lock(r.mutex);
      for (const auto& [i, agg] : r.aggregators) {
        if (auto d = agg.next_deadline()) {
          auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
              *d - std::chrono::steady_clock::now());
          wait = std::clamp(left, std::chrono::milliseconds(1), wait);
        }
      }
    }
    if (sub) {
      for (auto& env : broker_.poll_wait(*sub, kBatch, wait)) process(r.def.name, std::move(env));
    } else if (from.scheme == "queue") {
      if (auto env = broker_.try_receive(from.name, wait)) process(r.def.name, std::move(*env));
    } else {
      const auto now = std::chrono::steady_clock::now();
      if ((repeat < 0 || fired < repeat) && now >= next_fire) {
        bus::Envelope tick_env;
        tick_env.destination = from.str();
        tick_env.payload = {{"timer", from.name}, {"tick", fired}};
        ++fired;
        next_fire += period;
        process(r.def.name, std::move(tick_env));
      } else {
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
      }
    }
    tick(r.def.name);
  }
}

void RouteEngine::process(const std::string& name, bus::Envelope env) {
  Route& r = route(name);
  std::lock_guard lock(r.mutex);
  ++r.stats.received;
  execute(r, Exchange{std::move(env), std::nullopt, {}}, 0);
}

void RouteEngine::tick(const std::string& name) {
  Route& r = route(name);
  std::lock_guard lock(r.mutex);
  const auto now = Aggregator::Clock::now();
  for (auto& [index, agg] : r.aggregators) {
    for (auto& partial : agg.expire(now)) {
      execute(r, Exchange{std::move(partial), std::nullopt, {}}, index + 1);
    }
  }
}

void RouteEngine::execute(Route& r, Exchange ex, std::size_t first_step) {
  try {
    for (std::size_t i = first_step; i < r.def.steps.size(); ++i) {
      const auto& config = r.def.steps[i].config;
      if (const auto* c = std::get_if<TranslateConfig>(&config)) {
        ex = translate(std::move(ex), *c);
        ex.advance();
      } else if (const auto* c = std::get_if<FilterConfig>(&config)) {
        if (!filter(ex, *c)) {
          ++r.stats.filtered;
          return;
        }
      } else if (const auto* c = std::get_if<EnrichConfig>(&config)) {
        const std::string source = c->source;
        ex = enrich(std::move(ex), *c, [&](const bus::Envelope& e) { return call(source, e); });
        ex.advance();
      } else if (const auto* c = std::get_if<ContentRouteConfig>(&config)) {
        deliver(content_route(ex, *c), ex.current());
        ++r.stats.delivered;
        return;
      } else if (std::holds_alternative<AggregateConfig>(config)) {
        auto done = r.aggregators.at(i).offer(ex, Aggregator::Clock::now());
        if (!done) {
          ++r.stats.absorbed;
          return;
        }
        ex = Exchange{std::move(*done), std::nullopt, {}};
      }
    }
    if (r.def.to) deliver(*r.def.to, ex.current());
    ++r.stats.delivered;
  } catch (const std::exception& e) {
    dead_letter(r, ex.current(), e.what());
  }
}

void RouteEngine::deliver(const std::string& ref, const bus::Envelope& env) {
  const Endpoint ep = Endpoint::parse(ref);
  bus::Envelope out = env;
  out.id.clear();
  out.timestamp_ms = 0;
  out.destination = ep.name;
  if (ep.scheme == "topic") {
    broker_.publish(ep.name, std::move(out));
  } else if (ep.scheme == "queue") {
    broker_.send(ep.name, std::move(out));
  } else if (ep.scheme == "service" || ep.scheme == "model") {
    call(ref, out);
  } else {
    Sink sink;
    {
      std::lock_guard lock(mutex_);
      auto it = sinks_.find(ep.scheme);
      if (it == sinks_.end()) throw RoutingError("no sink for endpoint '" + ref + "'");
      sink = it->second;
    }
    sink(ep.name, out);
  }
}

Document RouteEngine::call(const std::string& ref, const bus::Envelope& env) {
  const Endpoint ep = Endpoint::parse(ref);
  if (ep.scheme == "service") {
    Service service;
    {
      std::lock_guard lock(mutex_);
      auto it = services_.find(ep.name);
      if (it == services_.end()) throw RoutingError("unknown service '" + ep.name + "'");
      service = it->second;
    }
    return service(env);
  }
  if (ep.scheme == "model") {
    std::pair<std::string, std::chrono::milliseconds> target;
    {
      std::lock_guard lock(mutex_);
      auto it = models_.find(ep.name);
      if (it == models_.end()) throw RoutingError("unknown model '" + ep.name + "'");
      target = it->second;
    }
    bus::Envelope req = env;
    req.id.clear();
    req.timestamp_ms = 0;
    req.destination = target.first;
    bus::Envelope reply = broker_.request(target.first, std::move(req), target.second);
    if (auto err = reply.header(kErrorHeader)) throw RoutingError("model '" + ep.name + "': " + *err);
    return reply.payload;
  }
  throw RoutingError("endpoint '" + ref + "' cannot be called");
}

void RouteEngine::dead_letter(Route& r, const bus::Envelope& env, const std::string& error) {
  ++r.stats.dead_lettered;
  spdlog::warn("route {}: {} (message sent to {})", r.def.name, error, kDeadLetterQueue);
  bus::Envelope out = env;
  out.id.clear();
  out.timestamp_ms = 0;
  out.destination = std::string(kDeadLetterQueue);
  out.headers[std::string(kErrorHeader)] = error;
  out.headers["route"] = r.def.name;
  broker_.send(std::string(kDeadLetterQueue), std::move(out));
}

RouteStats RouteEngine::stats(const std::string& name) const {
  Route& r = route(name);
  std::lock_guard lock(r.mutex);
  return r.stats;
}

std::vector<std::string> RouteEngine::route_names() const {
  std::lock_guard lock(mutex_);
  return order_;
}

}  // namespace ipaas::routes
