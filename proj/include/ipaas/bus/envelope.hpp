#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace ipaas::bus {

using Document = nlohmann::json;

inline constexpr std::string_view kReplyToHeader = "reply-to";
inline constexpr std::string_view kRetryCountHeader = "retry-count";

class BusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public BusError {
 public:
  using BusError::BusError;
};

class TimeoutError : public BusError {
 public:
  using BusError::BusError;
};

struct Envelope {
  std::string id;
  std::optional<std::string> correlation_id;
  std::string destination;
  std::int64_t timestamp_ms = 0;
  std::map<std::string, std::string> headers;
  Document payload = Document::object();

  std::optional<std::string> header(std::string_view name) const {
    auto it = headers.find(std::string(name));
    if (it == headers.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const Envelope&) const = default;
};

Envelope make_envelope(std::string destination, Document payload);

/// Compact single-line text form with fields in the fixed order
/// id, correlation_id, destination, timestamp, headers, payload.
std::string serialize(const Envelope& env);
Envelope parse_envelope(std::string_view text);

std::int64_t now_ms();

}  // namespace ipaas::bus
