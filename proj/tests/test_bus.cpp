#include "bus_stress.hpp"

#include "pipetwin/bus.hpp"
#include "pipetwin/model_json.hpp"

#include <doctest.h>

#include <thread>

using namespace pipetwin;
using namespace pipetwin::twin;

namespace {

nlohmann::json xml_payload(const std::string& xml = "<x/>") {
    return {{"project_id", "p"}, {"yaml_hash", std::string(64, 'a')}, {"xml", xml}};
}

nlohmann::json snapshot_payload() {
    return {{"project_id", "p"},
            {"snapshot",
             {{"raw_bytes", "a: {script: x}"},
              {"ref", "main"},
              {"commit_sha", "abc"},
              {"file_path", ".gitlab-ci.yml"},
              {"committed_at", "2025-01-01T00:00:00Z"},
              {"fetched_at", "2025-01-01T00:00:00Z"},
              {"yaml_hash", std::string(64, 'b')}}}};
}

} // namespace

TEST_CASE("topic names") {
    for (auto t : kAllTopics) CHECK(parse_topic(to_string(t)) == t);
    CHECK(to_string(Topic::config_snapshot) == "ConfigSnapshot");
    CHECK_FALSE(parse_topic("Nope"));
}

TEST_CASE("payload schemas are enforced") {
    Bus bus;
    CHECK_THROWS_AS(bus.publish(Topic::bpmn_xml, nlohmann::json::array()), SchemaViolation);
    CHECK_THROWS_AS(bus.publish(Topic::bpmn_xml, {{"project_id", "p"}, {"yaml_hash", "short"}, {"xml", ""}}),
                    SchemaViolation);
    CHECK_THROWS_AS(bus.publish(Topic::config_snapshot, {{"project_id", ""}}), SchemaViolation);
    CHECK_THROWS_AS(bus.publish(Topic::execution_data, {{"project_id", "p"}, {"run", {{"schema", "x"}}}}),
                    SchemaViolation);
    CHECK(bus.last_sequence(Topic::bpmn_xml) == 0);

    CHECK(bus.publish(Topic::bpmn_xml, xml_payload()) == 1);
    CHECK(bus.publish(Topic::config_snapshot, snapshot_payload()) == 1);
    CHECK(bus.publish(Topic::change_detection, snapshot_payload()) == 1);
    PipelineRun run;
    run.run_id = "1";
    run.pipeline_yaml_hash = std::string(64, 'c');
    CHECK(bus.publish(Topic::execution_data, {{"project_id", "p"}, {"run", run_to_json(run)}}) == 1);
    CHECK(bus.publish(Topic::bpmn_xml, xml_payload()) == 2);
}

TEST_CASE("subscribers see only later envelopes, in order") {
    Bus bus(8, [] { return Timestamp{std::chrono::seconds(5)}; });
    bus.publish(Topic::bpmn_xml, xml_payload("early"));
    auto sub = bus.subscribe(Topic::bpmn_xml);
    CHECK(bus.subscriber_count(Topic::bpmn_xml) == 1);
    CHECK_FALSE(sub->try_next());
    bus.publish(Topic::bpmn_xml, xml_payload("a"));
    bus.publish(Topic::bpmn_xml, xml_payload("b"));
    auto a = sub->try_next();
    auto b = sub->next_for(std::chrono::milliseconds(10));
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->sequence == 2);
    CHECK(a->payload.at("xml") == "a");
    CHECK(b->sequence == 3);
    CHECK(a->published_at == Timestamp{std::chrono::seconds(5)});
    CHECK_FALSE(sub->next_for(std::chrono::milliseconds(10)));
    CHECK(sub->topic() == Topic::bpmn_xml);
}

TEST_CASE("closing releases blocked publishers and readers") {
    Bus bus(1);
    auto sub = bus.subscribe(Topic::bpmn_xml);
    bus.publish(Topic::bpmn_xml, xml_payload());
    std::atomic<bool> published{false};
    std::thread t([&] {
        bus.publish(Topic::bpmn_xml, xml_payload());
        published = true;
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    CHECK_FALSE(published.load());
    sub->close();
    t.join();
    CHECK(published.load());
    CHECK(sub->closed());
    CHECK_FALSE(sub->next());
    CHECK(bus.subscriber_count(Topic::bpmn_xml) == 0);

    auto reader = bus.subscribe(Topic::bpmn_xml);
    std::thread r([&] { CHECK_FALSE(reader->next()); });
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    bus.shutdown();
    r.join();
    CHECK(bus.publish(Topic::bpmn_xml, xml_payload()) == 3);
}

TEST_CASE("stress: 4 publishers x 4 subscribers x 1000 messages") {
    auto r = stress::run(4, 4, 1000, 4);
    std::string problems;
    for (const auto& p : r.problems) problems += p + "\n";
    INFO(problems);
    CHECK(r.ordered);
    CHECK(r.per_publisher_fifo);
    CHECK(r.lossless);
    CHECK(r.no_replay);
    CHECK(r.delivered == 16000);
    CHECK(r.late_delivered == 1);
    CHECK(r.late_first_sequence == r.prefix + 4000 + 1);
}

TEST_CASE("stress with single-slot queues") {
    auto r = stress::run(3, 2, 300, 1);
    CHECK(r.ordered);
    CHECK(r.lossless);
    CHECK(r.no_replay);
}
