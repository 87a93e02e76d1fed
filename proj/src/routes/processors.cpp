#include "ipaas/routes/processors.hpp"

#include <algorithm>

namespace ipaas::routes {

std::string ProcessorStep::kind() const {
  return std::visit(
      [](const auto& c) -> std::string {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, TranslateConfig>) return "translate";
        if constexpr (std::is_same_v<T, ContentRouteConfig>) return "content-route";
        if constexpr (std::is_same_v<T, AggregateConfig>) return "aggregate";
        if constexpr (std::is_same_v<T, EnrichConfig>) return "enrich";
        if constexpr (std::is_same_v<T, FilterConfig>) return "filter";
      },
      config);
}

Exchange translate(Exchange exchange, const TranslateConfig& config) {
  const auto& source = exchange.current().payload;
  Document target = config.pass_through && source.is_object() ? source : Document::object();

  for (const auto& m : config.mappings) {
    const Document* value = find_path(source, m.from);
    if (value == nullptr) {
      if (m.optional) continue;
      throw RoutingError("translate: required field '" + m.from + "' missing");
    }
    Document copy = *value;
    if (config.pass_through && m.from != m.to) erase_path(target, m.from);
    set_path(target, m.to, std::move(copy));
  }

  bus::Envelope out = exchange.current();
  out.payload = std::move(target);
  exchange.out = std::move(out);
  return exchange;
}

std::string content_route(const Exchange& exchange, const ContentRouteConfig& config) {
  const auto& payload = exchange.current().payload;
  for (const auto& rule : config.rules) {
    if (evaluate(rule.when, payload)) return rule.destination;
  }
  return config.default_destination;
}

bool filter(const Exchange& exchange, const FilterConfig& config) {
  return evaluate(config.when, exchange.current().payload);
}

Exchange enrich(Exchange exchange, const EnrichConfig& config, const Service& service) {
  Document response = service(exchange.current());
  bus::Envelope out = exchange.current();
  if (!config.into.empty()) {
    set_path(out.payload, config.into, std::move(response));
  } else if (response.is_object()) {
    if (!out.payload.is_object()) out.payload = Document::object();
    out.payload.update(response);
  } else if (!response.is_null()) {
    throw RoutingError("enrich: non-object response from '" + config.source +
                       "' needs an 'into' path");
  }
  exchange.out = std::move(out);
  return exchange;
}

Aggregator::Aggregator(AggregateConfig config) : config_(std::move(config)) {
  if (config_.completion < 1) throw RoutingError("aggregate: completion count must be >= 1");
  if (config_.key.empty()) throw RoutingError("aggregate: correlation key path is empty");
}

std::optional<bus::Envelope> Aggregator::offer(const Exchange& exchange, Clock::time_point now) {
  const auto& env = exchange.current();
  const Document* key_value = find_path(env.payload, config_.key);
  if (key_value == nullptr) {
    throw RoutingError("aggregate: correlation key '" + config_.key + "' missing");
  }
  const std::string key =
      key_value->is_string() ? key_value->get<std::string>() : key_value->dump();

  auto [it, inserted] = buckets_.try_emplace(key);
  Bucket& bucket = it->second;
  if (inserted) {
    bucket.key = key;
    bucket.deadline = now + config_.timeout;
    arrival_.push_back(key);
  }
  if (env.payload.is_object()) bucket.payload.update(env.payload);
  for (const auto& [k, v] : env.headers) bucket.headers[k] = v;
  ++bucket.count;

  if (bucket.count < config_.completion) return std::nullopt;
  Bucket done = std::move(bucket);
  buckets_.erase(it);
  arrival_.erase(std::find(arrival_.begin(), arrival_.end(), key));
  return emit(std::move(done), false);
}

std::vector<bus::Envelope> Aggregator::expire(Clock::time_point now) {
  std::vector<bus::Envelope> out;
  for (auto it = arrival_.begin(); it != arrival_.end();) {
    auto bucket = buckets_.find(*it);
    if (bucket->second.deadline <= now) {
      out.push_back(emit(std::move(bucket->second), true));
      buckets_.erase(bucket);
      it = arrival_.erase(it);
    } else {
      ++it;
    }
  }
  return out;
}

std::optional<Aggregator::Clock::time_point> Aggregator::next_deadline() const {
  std::optional<Clock::time_point> earliest;
  for (const auto& [key, bucket] : buckets_) {
    if (!earliest || bucket.deadline < *earliest) earliest = bucket.deadline;
  }
  return earliest;
}

bus::Envelope Aggregator::emit(Bucket bucket, bool partial) const {
  bus::Envelope env;
  env.correlation_id = bucket.key;
  env.headers = std::move(bucket.headers);
  env.headers["aggregated-count"] = std::to_string(bucket.count);
  if (partial) {
    env.headers[std::string(kPartialHeader)] = "true";
  } else {
    env.headers.erase(std::string(kPartialHeader));
  }
  env.payload = std::move(bucket.payload);
  return env;
}

}  // namespace ipaas::routes
