#include <doctest.h>

#include <chrono>
#include <map>
#include <thread>

#include "ipaas/routes/route_engine.hpp"
#include "support/testkit.hpp"

using namespace ipaas;
using namespace ipaas::routes;
using namespace std::chrono_literals;
using bus::Envelope;
using bus::make_envelope;

namespace {

Exchange exchange_of(Document payload) { return Exchange{make_envelope("in", std::move(payload)), std::nullopt, {}}; }

Condition cond(const std::string& text) { return {Predicate::parse(text)}; }

std::vector<Envelope> drain(bus::Broker& b, const std::string& queue, std::size_t expect,
                            std::chrono::milliseconds wait = 2000ms) {
  std::vector<Envelope> out;
  const auto deadline = std::chrono::steady_clock::now() + wait;
  while (out.size() < expect && std::chrono::steady_clock::now() < deadline) {
    if (auto e = b.try_receive(queue, 20ms)) out.push_back(std::move(*e));
  }
  return out;
}

}  // namespace

TEST_CASE("predicate: parsing, comparators and variable references") {
  const Document doc{{"gas", 700}, {"budget", 800}, {"sensor", "humidity"}, {"nested", {{"x", 1.5}}}};
  CHECK(Predicate::parse("gas <= 800").evaluate(doc));
  CHECK(Predicate::parse("gas≤800").evaluate(doc));
  CHECK_FALSE(Predicate::parse("gas > 800").evaluate(doc));
  CHECK(Predicate::parse("gas != 701").evaluate(doc));
  CHECK(Predicate::parse("gas == 700").evaluate(doc));
  CHECK(Predicate::parse("gas >= 700").evaluate(doc));
  CHECK(Predicate::parse("gas < $budget").evaluate(doc));
  CHECK(Predicate::parse("sensor == humidity").evaluate(doc));
  CHECK(Predicate::parse("sensor = \"humidity\"").evaluate(doc));
  CHECK(Predicate::parse("nested.x > 1").evaluate(doc));
  CHECK_THROWS_AS(Predicate::parse("missing > 1").evaluate(doc), PredicateError);
  CHECK_THROWS_AS(Predicate::parse("sensor > 3").evaluate(doc), PredicateError);
  CHECK_THROWS_AS(Predicate::parse("no comparator"), PredicateError);
  CHECK(evaluate(Condition{}, doc));
  CHECK_FALSE(evaluate({Predicate::parse("gas < 800"), Predicate::parse("gas > 750")}, doc));
}

TEST_CASE("predicate: text form parses back to the same predicate") {
  for (const char* text : {"a.b <= 3.5", "s == \"x y\"", "flag != true", "gas < $budget"}) {
    const auto p = Predicate::parse(text);
    const auto q = Predicate::parse(p.to_string());
    CHECK(q.path == p.path);
    CHECK(q.op == p.op);
    CHECK(q.value == p.value);
  }
}

TEST_CASE("translate: renames, drops unmapped fields and reports missing ones") {
  auto out = translate(exchange_of({{"hum_in", 25}, {"extra", 1}}), {{{"hum_in", "input_humidity"}}, false});
  CHECK(out.out->payload == Document{{"input_humidity", 25}});

  CHECK_THROWS_AS(translate(exchange_of({{"other", 1}}), {{{"hum_in", "input_humidity"}}, false}), RoutingError);
  auto opt = translate(exchange_of({{"other", 1}}), {{{"hum_in", "input_humidity", true}}, false});
  CHECK(opt.out->payload == Document::object());
}

TEST_CASE("translate: identity with pass-through leaves the payload unchanged") {
  const Document payload = Document::parse(R"({"a":1,"b":{"c":[1,2,3]},"d":"x","e":2.25})");
  auto out = translate(exchange_of(payload), {{{"a", "a"}, {"d", "d"}}, true});
  const auto round = Document::parse(out.out->payload.dump());
  CHECK(round.dump() == payload.dump());
}

TEST_CASE("translate: a bijective mapping and its inverse restore mapped fields") {
  testkit::Gen gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    Document payload = Document::object();
    TranslateConfig fwd, inv;
    const std::size_t n = 1 + gen.index(6);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string from = "f" + std::to_string(i);
      const std::string to = "t" + std::to_string(i);
      payload[from] = gen.uniform(-100, 100);
      fwd.mappings.push_back({from, to});
      inv.mappings.push_back({to, from});
    }
    auto there = translate(exchange_of(payload), fwd);
    there.advance();
    auto back = translate(there, inv);
    CHECK(back.out->payload == payload);
  }
}

TEST_CASE("content_route: first match wins, default otherwise, errors propagate") {
  ContentRouteConfig cfg{{{cond("gas <= 800"), "boiler.setpoints"}}, "predict.retry"};
  CHECK(content_route(exchange_of({{"gas", 700}}), cfg) == "boiler.setpoints");
  CHECK(content_route(exchange_of({{"gas", 900}}), cfg) == "predict.retry");

  ContentRouteConfig two{{{cond("gas < 1000"), "first"}, {cond("gas < 2000"), "second"}}, "none"};
  CHECK(content_route(exchange_of({{"gas", 10}}), two) == "first");
  CHECK_THROWS_AS(content_route(exchange_of({{"other", 1}}), cfg), PredicateError);
}

TEST_CASE("aggregate: merges pairs, emits partials on timeout, keeps keys apart") {
  using Clock = Aggregator::Clock;
  const auto t0 = Clock::now();
  Aggregator agg({"cycle_id", 2, 100ms});
  CHECK_FALSE(agg.offer(exchange_of({{"cycle_id", "c1"}, {"input_humidity", 25}}), t0));
  auto done = agg.offer(exchange_of({{"cycle_id", "c1"}, {"weight", 60}}), t0 + 1ms);
  REQUIRE(done);
  CHECK(done->payload == Document{{"cycle_id", "c1"}, {"input_humidity", 25}, {"weight", 60}});
  CHECK(done->correlation_id == "c1");
  CHECK_FALSE(done->header(kPartialHeader));

  CHECK_FALSE(agg.offer(exchange_of({{"cycle_id", "c2"}, {"weight", 1}}), t0));
  CHECK(agg.expire(t0 + 50ms).empty());
  auto partial = agg.expire(t0 + 100ms);
  REQUIRE(partial.size() == 1);
  CHECK(partial[0].header(kPartialHeader) == "true");
  CHECK(partial[0].payload.at("weight") == 1);
  CHECK(agg.pending() == 0);

  // later fields win
  CHECK_FALSE(agg.offer(exchange_of({{"cycle_id", "c3"}, {"v", 1}}), t0));
  CHECK(agg.offer(exchange_of({{"cycle_id", "c3"}, {"v", 2}}), t0)->payload.at("v") == 2);
  CHECK_THROWS_AS(Aggregator({"k", 0, 10ms}), RoutingError);
}

TEST_CASE("aggregate: interleaved keys and exact emission counts") {
  testkit::Gen gen(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + gen.index(4);
    Aggregator agg({"key", n, std::chrono::hours(1)});
    std::map<std::string, int> sent, emitted;
    std::vector<std::string> keys{"a", "b", "c"};
    for (int i = 0; i < 60; ++i) {
      const auto& key = keys[gen.index(3)];
      ++sent[key];
      auto out = agg.offer(exchange_of({{"key", key}, {key + "_field", i}}), Aggregator::Clock::now());
      if (out) {
        ++emitted[*out->correlation_id];
        for (const auto& [field, value] : out->payload.items()) {
          CHECK((field == "key" || field == *out->correlation_id + "_field"));
        }
      }
    }
    for (const auto& [key, count] : sent) {
      CHECK(emitted[key] == count / static_cast<int>(n));
    }
  }
}

TEST_CASE("filter and enrich") {
  CHECK(filter(exchange_of({{"gas", 1}}), {cond("gas < 2")}));
  CHECK_FALSE(filter(exchange_of({{"gas", 3}}), {cond("gas < 2")}));

  auto merged = enrich(exchange_of({{"a", 1}}), {"service:x", ""}, [](const Envelope&) {
    return Document{{"b", 2}};
  });
  CHECK(merged.out->payload == Document{{"a", 1}, {"b", 2}});
  auto nested = enrich(exchange_of({{"a", 1}}), {"service:x", "extra.value"}, [](const Envelope&) {
    return Document(5);
  });
  CHECK(nested.out->payload.at("extra").at("value") == 5);
  CHECK_THROWS_AS(enrich(exchange_of({}), {"service:x", ""}, [](const Envelope&) { return Document(5); }),
                  RoutingError);
}

TEST_CASE("route engine: pass-through delivery, duplicates and endpoint resolution") {
  bus::Broker broker;
  RouteEngine engine(broker);
  engine.register_route({"a-to-b", "topic:A", {}, "topic:B"});
  CHECK_THROWS_AS(engine.register_route({"a-to-b", "topic:A", {}, "topic:C"}), RouteDefinitionError);
  CHECK_THROWS_AS(engine.register_route({"bad", "topic:A", {{EnrichConfig{"model:undefined", ""}}}, "topic:C"}),
                  RouteDefinitionError);
  CHECK_THROWS_AS(engine.register_route({"nowhere", "topic:A", {}, "ftp:B"}), RouteDefinitionError);
  CHECK_THROWS_AS(engine.register_route({"", "topic:A", {}, "topic:B"}), RouteDefinitionError);
  CHECK_THROWS_AS(engine.register_route({"empty", "topic:A", {}, std::nullopt}), RouteDefinitionError);
  CHECK_THROWS_AS(engine.register_route({"noroute", "topic:A", {{ContentRouteConfig{{}, "queue:x"}}}, std::nullopt}),
                  RouteDefinitionError);

  broker.publish("A", make_envelope("A", {{"x", 1}}));
  CHECK(broker.topic_size("B") == 0);  // idle until started
  engine.start();
  auto sub = broker.subscribe("B", "test");
  auto got = broker.poll_wait(sub, 10, 2000ms);
  engine.stop();
  REQUIRE(got.size() == 1);
  CHECK(got[0].payload == Document{{"x", 1}});
}

TEST_CASE("route engine: every input lands in exactly one place") {
  bus::Broker broker;
  RouteEngine engine(broker);
  RouteDefinition def;
  def.name = "sorter";
  def.from = "queue:in";
  def.steps.push_back({TranslateConfig{{{"v", "value"}, {"tag", "tag", true}}, false}});
  def.steps.push_back({FilterConfig{cond("value != 13")}});
  def.steps.push_back({ContentRouteConfig{{{cond("value < 50"), "queue:low"}}, "queue:high"}});
  engine.register_route(def);

  testkit::Gen gen(8);
  int missing = 0, filtered = 0;
  for (int i = 0; i < 200; ++i) {
    const int v = static_cast<int>(gen.index(100));
    if (gen.index(10) == 0) {
      broker.send("in", make_envelope("in", {{"other", v}}));
      ++missing;
    } else {
      broker.send("in", make_envelope("in", {{"v", v}}));
      filtered += v == 13;
    }
  }
  engine.start();
  const auto deadline = std::chrono::steady_clock::now() + 5s;
  while (engine.stats("sorter").received < 200 && std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(5ms);
  }
  engine.stop();
  const auto stats = engine.stats("sorter");
  CHECK(stats.received == 200);
  CHECK(stats.dead_lettered == static_cast<std::uint64_t>(missing));
  CHECK(stats.filtered == static_cast<std::uint64_t>(filtered));
  CHECK(stats.delivered + stats.dead_lettered + stats.filtered == 200);
  CHECK(broker.queue_depth("low") + broker.queue_depth("high") == stats.delivered);
  CHECK(broker.queue_depth("dlq") == stats.dead_lettered);

  auto dead = broker.receive("dlq", 100ms);
  CHECK(dead.header(kErrorHeader)->find("missing") != std::string::npos);
  while (auto low = broker.try_receive("low", 1ms)) CHECK(low->payload.at("value").get<int>() < 50);
  while (auto high = broker.try_receive("high", 1ms)) CHECK(high->payload.at("value").get<int>() >= 50);
}

TEST_CASE("route engine: aggregation and timeout partials run on the route thread") {
  bus::Broker broker;
  RouteEngine engine(broker);
  engine.register_route({"join", "topic:readings", {{AggregateConfig{"cycle", 2, 150ms}}}, "queue:joined"});
  engine.start();
  for (const char* c : {"c1", "c2", "c3"}) broker.publish("readings", make_envelope("readings", {{"cycle", c}, {"h", 1}}));
  for (const char* c : {"c3", "c1"}) broker.publish("readings", make_envelope("readings", {{"cycle", c}, {"w", 2}}));
  auto joined = drain(broker, "joined", 3);
  engine.stop();
  REQUIRE(joined.size() == 3);
  std::map<std::string, bool> partial;
  for (const auto& e : joined) partial[*e.correlation_id] = e.header(kPartialHeader).has_value();
  CHECK(partial == std::map<std::string, bool>{{"c1", false}, {"c2", true}, {"c3", false}});
}

TEST_CASE("route engine: enrich through a service and a model endpoint") {
  bus::Broker broker;
  RouteEngine engine(broker);
  engine.register_service("double", [](const Envelope& e) { return Document{{"doubled", 2 * e.payload.at("v").get<int>()}}; });
  engine.register_model("oracle", "ml.oracle", 1000ms);
  std::atomic<bool> stop{false};
  std::thread model([&] {
    while (!stop) {
      if (auto req = broker.try_receive("ml.oracle", 10ms)) {
        broker.reply(*req, make_envelope("", {{"answer", req->payload.at("doubled").get<int>() + 1}}));
      }
    }
  });
  std::vector<Envelope> sunk;
  std::mutex sunk_mutex;
  engine.register_sink("engine", [&](const std::string& name, const Envelope& e) {
    std::lock_guard lock(sunk_mutex);
    sunk.push_back(e);
    sunk.back().headers["sink-name"] = name;
  });
  engine.register_route({"pipeline", "queue:start",
                         {{EnrichConfig{"service:double", ""}}, {EnrichConfig{"model:oracle", "ml"}}},
                         "engine:predict"});
  engine.start();
  broker.send("start", make_envelope("start", {{"v", 20}}));
  const auto deadline = std::chrono::steady_clock::now() + 3s;
  while (std::chrono::steady_clock::now() < deadline) {
    std::lock_guard lock(sunk_mutex);
    if (!sunk.empty()) break;
  }
  engine.stop();
  stop = true;
  model.join();
  REQUIRE(sunk.size() == 1);
  CHECK(sunk[0].payload == Document{{"v", 20}, {"doubled", 40}, {"ml", {{"answer", 41}}}});
  CHECK(sunk[0].headers.at("sink-name") == "predict");
}

TEST_CASE("route definitions: document form round-trips") {
  const Document doc = Document::parse(R"({"routes":[
    {"name":"r1","from":"topic:a","steps":[
      {"kind":"translate","mappings":[{"from":"x","to":"y","optional":true}],"pass_through":true},
      {"kind":"filter","when":"y > 2"},
      {"kind":"aggregate","key":"id","completion":3,"timeout_ms":250},
      {"kind":"enrich","source":"service:s","into":"info"},
      {"kind":"content-route","rules":[{"when":["y > 1","y < 9"],"to":"queue:mid"}],"default":"queue:dlq"}]},
    {"name":"r2","from":"timer:tick?period=10","to":"topic:b"}]})");
  const auto defs = routes_from_json(doc);
  REQUIRE(defs.size() == 2);
  CHECK(defs[0].steps.size() == 5);
  CHECK(defs[0].steps[4].kind() == "content-route");
  CHECK(std::get<ContentRouteConfig>(defs[0].steps[4].config).rules[0].when.size() == 2);
  CHECK(std::get<AggregateConfig>(defs[0].steps[2].config).timeout == 250ms);
  for (const auto& def : defs) {
    const auto again = route_from_json(route_to_json(def));
    CHECK(route_to_json(again) == route_to_json(def));
  }
  CHECK_THROWS_AS(routes_from_json(Document::parse(R"([{"name":"x","from":"topic:a","steps":[{"kind":"split"}]}])")),
                  RouteDefinitionError);
  CHECK_THROWS_AS(Endpoint::parse("nocolon"), RouteDefinitionError);
  const auto ep = Endpoint::parse("timer:t?period=5&repeat=2");
  CHECK(ep.scheme == "timer");
  CHECK(ep.params.at("repeat") == "2");
}
