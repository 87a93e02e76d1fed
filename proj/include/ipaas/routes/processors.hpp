#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ipaas/bus/envelope.hpp"
#include "ipaas/routes/predicate.hpp"

namespace ipaas::routes {

inline constexpr std::string_view kDeadLetterQueue = "dlq";
inline constexpr std::string_view kErrorHeader = "error";
inline constexpr std::string_view kPartialHeader = "partial";

class RoutingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// What a route step works on. Once a step sets `out`, the next step sees it
/// as `in`.
struct Exchange {
  bus::Envelope in;
  std::optional<bus::Envelope> out;
  std::map<std::string, Document> properties;

  const bus::Envelope& current() const { return out ? *out : in; }
  void advance() {
    if (out) {
      in = std::move(*out);
      out.reset();
    }
  }
};

struct FieldMapping {
  std::string from;
  std::string to;
  bool optional = false;
};

struct TranslateConfig {
  std::vector<FieldMapping> mappings;
  bool pass_through = false;  // keep unmapped fields
};

struct RouteRule {
  Condition when;
  std::string destination;
};

struct ContentRouteConfig {
  std::vector<RouteRule> rules;
  std::string default_destination;
};

struct AggregateConfig {
  std::string key;  // payload path holding the correlation key
  std::size_t completion = 1;
  std::chrono::milliseconds timeout{1000};
};

struct EnrichConfig {
  std::string source;  // service:<name> or model:<name>
  std::string into;    // payload path for the response; empty merges at the root
};

struct FilterConfig {
  Condition when;
};

using StepConfig =
    std::variant<TranslateConfig, ContentRouteConfig, AggregateConfig, EnrichConfig, FilterConfig>;

struct ProcessorStep {
  StepConfig config;
  std::string kind() const;
};

/// Message Translator. Sets exchange.out; throws RoutingError when a required
/// source path is missing.
Exchange translate(Exchange exchange, const TranslateConfig& config);

/// Content-Based Router: destination of the first rule whose condition holds,
/// else the default. Predicate errors propagate as PredicateError.
std::string content_route(const Exchange& exchange, const ContentRouteConfig& config);

/// Message Filter: true when the exchange should continue.
bool filter(const Exchange& exchange, const FilterConfig& config);

using Service = std::function<Document(const bus::Envelope&)>;

/// Content Enricher: merges the service response into the payload.
Exchange enrich(Exchange exchange, const EnrichConfig& config, const Service& service);

/// Keyed aggregator. Buckets complete after `completion` messages or, with a
/// "partial" header, when their timeout runs out.
class Aggregator {
 public:
  using Clock = std::chrono::steady_clock;

  explicit Aggregator(AggregateConfig config);

  std::optional<bus::Envelope> offer(const Exchange& exchange, Clock::time_point now);
  std::vector<bus::Envelope> expire(Clock::time_point now);
  std::optional<Clock::time_point> next_deadline() const;
  std::size_t pending() const { return buckets_.size(); }

 private:
  struct Bucket {
    std::string key;
    Document payload = Document::object();
    std::map<std::string, std::string> headers;
    std::size_t count = 0;
    Clock::time_point deadline;
  };

  bus::Envelope emit(Bucket bucket, bool partial) const;

  AggregateConfig config_;
  std::map<std::string, Bucket> buckets_;
  std::vector<std::string> arrival_;  // keys in first-arrival order
};

}  // namespace ipaas::routes
