#include "ipaas/bus/envelope.hpp"

#include <chrono>

namespace ipaas::bus {

Envelope make_envelope(std::string destination, Document payload) {
  Envelope env;
  env.destination = std::move(destination);
  env.payload = std::move(payload);
  return env;
}

std::string serialize(const Envelope& env) {
  // Built by hand so the envelope fields keep their documented order while the
  // payload keeps its canonical (key-sorted) form.
  std::string out = "{\"id\":";
  out += Document(env.id).dump();
  out += ",\"correlation_id\":";
  out += env.correlation_id ? Document(*env.correlation_id).dump() : "null";
  out += ",\"destination\":";
  out += Document(env.destination).dump();
  out += ",\"timestamp\":";
  out += std::to_string(env.timestamp_ms);
  out += ",\"headers\":";
  out += Document(env.headers).dump();
  out += ",\"payload\":";
  out += env.payload.dump();
  out += '}';
  return out;
}

Envelope parse_envelope(std::string_view text) {
  Document doc;
  try {
    doc = Document::parse(text);
  } catch (const Document::parse_error& e) {
    throw ValidationError(std::string("envelope parse error: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("envelope must be an object");
  try {
    Envelope env;
    env.id = doc.at("id").get<std::string>();
    if (!doc.at("correlation_id").is_null()) {
      env.correlation_id = doc.at("correlation_id").get<std::string>();
    }
    env.destination = doc.at("destination").get<std::string>();
    env.timestamp_ms = doc.at("timestamp").get<std::int64_t>();
    env.headers = doc.at("headers").get<std::map<std::string, std::string>>();
    env.payload = doc.at("payload");
    return env;
  } catch (const Document::exception& e) {
    throw ValidationError(std::string("malformed envelope: ") + e.what());
  }
}

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace ipaas::bus
