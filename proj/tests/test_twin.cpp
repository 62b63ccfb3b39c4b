#include "fixtures.hpp"
#include "generators.hpp"
#include "mock_forge.hpp"
#include "scenario.hpp"
#include "table2.hpp"

#include "pipetwin/model_json.hpp"
#include "pipetwin/twin.hpp"

#include <doctest.h>

#include <atomic>
#include <thread>

using namespace pipetwin;
using namespace pipetwin::twin;

namespace {

forge::ConfigSnapshot snapshot(const std::string& text, const std::string& sha, const std::string& when) {
    forge::ConfigSnapshot s;
    s.raw = {text, {"main", sha, ".gitlab-ci.yml"}};
    s.committed_at = *parse_timestamp(when);
    s.fetched_at = *parse_timestamp("2030-01-01T00:00:00Z");
    return s;
}

struct Rig {
    Store store;
    Bus bus;
    Twin twin{store, bus};
    Rig() {
        forge::ProjectHandle h;
        h.base_url = "https://gitlab.example.com";
        h.project_id = "p";
        twin.register_project(h);
    }
};

} // namespace

TEST_CASE("five commits, three versions") {
    auto o = scenario::run();
    CHECK(o.idle);
    CHECK(o.models == 3);
    CHECK(o.bpmn_entries == 3);
    CHECK(o.versions == 3);
    CHECK(o.generations == 3);
    CHECK(o.change_detections == 2);
    CHECK(o.poll_results == std::vector<bool>{false, true, false, true});
    CHECK(o.runs == 5);
    CHECK(o.replay_idempotent);
    CHECK(o.generations_after_replay == 3);
    CHECK(o.forge_writes == 0);
    CHECK(o.seconds < 5.0);
}

TEST_CASE("versions keep the earliest commit as provenance") {
    Rig r;
    const auto text = fixtures::read("fig2.yml");
    r.twin.ingest_snapshot("p", snapshot(text, "late", "2025-02-02T00:00:00Z"));
    r.twin.ingest_snapshot("p", snapshot(text, "early", "2025-01-01T00:00:00Z"));
    r.twin.ingest_snapshot("p", snapshot(text, "later", "2025-03-03T00:00:00Z"));
    auto vs = r.twin.versions("p");
    REQUIRE(vs.size() == 1);
    CHECK(vs[0].commit_sha == "early");
    CHECK(format_timestamp(vs[0].first_seen) == "2025-01-01T00:00:00Z");
    CHECK(vs[0].job_count == 5);
    CHECK(r.twin.generation_count() == 1);
    auto model = r.twin.model("p", vs[0].yaml_hash);
    REQUIRE(model);
    CHECK(model->commit_sha == "early");
    auto doc = r.twin.bpmn("p", vs[0].yaml_hash);
    REQUIRE(doc);
    CHECK(doc->xml == fixtures::read("fig2.bpmn"));
    CHECK(version_from_json(to_json(vs[0])) == vs[0]);
}

TEST_CASE("invalid configurations leave a failure record and no version") {
    Rig r;
    const auto bad = fixtures::read("cycle.yml");
    r.twin.ingest_snapshot("p", snapshot(bad, "c1", "2025-01-01T00:00:00Z"));
    const auto hash = compute_yaml_hash(bad);
    auto failure = r.store.get(Namespace::operational, keys::failure("p", hash), kFailureSchema);
    REQUIRE(failure);
    CHECK(failure->at("stage") == "parse");
    CHECK(failure->at("violations").at(0).at("rule") == "R09-needs-cycle");
    CHECK(failure->at("violations").at(0).at("entity") == "alpha,beta");
    CHECK(r.twin.versions("p").empty());
    CHECK(r.twin.status().at("errors").size() == 1);

    const auto collide = "stages: [t]\n\"a:b\": {stage: t, script: x}\n\"a/b\": {stage: t, script: y}\n";
    r.twin.ingest_snapshot("p", snapshot(collide, "c2", "2025-01-02T00:00:00Z"));
    auto gen_failure = r.store.get(Namespace::operational, keys::failure("p", compute_yaml_hash(collide)));
    REQUIRE(gen_failure);
    CHECK(gen_failure->at("stage") == "generate");
    CHECK(r.twin.generation_count() == 0);
}

TEST_CASE("runs, metrics and cache invalidation") {
    Rig r;
    const auto v1 = fixtures::read("inkscape_v1.yml");
    r.twin.ingest_snapshot("p", snapshot(v1, "s1", "2025-01-01T00:00:00Z"));
    const auto hash = compute_yaml_hash(v1);
    auto runs = table2::runs(table2::v1_shape(), hash, 1);
    for (std::size_t i = 0; i + 1 < runs.size(); ++i) r.twin.ingest_run("p", runs[i]);
    auto m = r.twin.metrics("p", hash);
    REQUIRE(m);
    CHECK(m->runs == 15);
    r.twin.ingest_run("p", runs.back());
    m = r.twin.metrics("p", hash);
    CHECK(m->runs == 16);
    CHECK(m->success_rate_pct == doctest::Approx(31.2));
    CHECK(m->stage_avg_s.at("build") == doctest::Approx(614));

    auto listed = r.twin.runs("p");
    REQUIRE(listed.size() == 16);
    CHECK(listed[1].run_id == "2");
    CHECK(listed[9].run_id == "10");
    CHECK(r.twin.runs("p", std::string(64, '0')).empty());
    CHECK(r.twin.run("p", "7")->status == ExecutionStatus::failed);
    CHECK_FALSE(r.twin.run("p", "99"));
    CHECK_FALSE(r.twin.metrics("p", std::string(64, '0')));
}

TEST_CASE("metrics read concurrently with run ingestion end up current") {
    Rig r;
    const auto v2 = fixtures::read("inkscape_v2.yml");
    r.twin.ingest_snapshot("p", snapshot(v2, "s2", "2025-01-01T00:00:00Z"));
    const auto hash = compute_yaml_hash(v2);
    const auto runs = table2::runs(table2::v2_shape(), hash, 1);
    std::atomic<bool> done{false};
    std::vector<std::thread> readers;
    for (int i = 0; i < 3; ++i)
        readers.emplace_back([&] {
            while (!done) r.twin.metrics("p", hash);
        });
    for (const auto& run : runs) r.twin.ingest_run("p", run);
    done = true;
    for (auto& t : readers) t.join();
    auto m = r.twin.metrics("p", hash);
    REQUIRE(m);
    CHECK(m->runs == 100);
    CHECK(m->success_rate_pct == doctest::Approx(61.0));
}

TEST_CASE("projects: tokens stay in memory, unknown ids are rejected") {
    Store store;
    Bus bus;
    Twin twin(store, bus);
    forge::ProjectHandle h{"https://gitlab.example.com", "g/p", std::string("tok-123456"), ".gitlab-ci.yml", ""};
    twin.register_project(h);
    CHECK(store.dump().find("tok-123456") == std::string::npos);
    REQUIRE(twin.project("g/p"));
    CHECK_FALSE(twin.project("g/p")->token);
    CHECK(twin.projects().size() == 1);
    CHECK_THROWS_AS(twin.sync("nope"), UnknownProject);
    CHECK_THROWS_AS(twin.poll_changes("nope"), UnknownProject);
    h.base_url = "http://gitlab.example.com";
    CHECK_THROWS_AS(twin.register_project(h), forge::InvalidHandle);
}

TEST_CASE("tokens reach the forge and sync errors propagate") {
    mock::Forge forge;
    scenario::populate(forge);
    forge.require_token("sekrit");
    Store store;
    Bus bus;
    Twin twin(store, bus);
    twin.start();
    forge::ProjectHandle h{forge.base_url(), "42", std::string("sekrit"), ".gitlab-ci.yml", ""};
    twin.register_project(h);
    auto report = twin.sync("42");
    CHECK(report.snapshots == 5);
    CHECK(report.runs == 5);
    CHECK(twin.wait_idle());
    CHECK(twin.versions("42").size() == 3);
    CHECK(to_json(report).at("snapshots") == 5);

    h.token = "wrong";
    twin.register_project(h);
    CHECK_THROWS_AS(twin.sync("42"), forge::ForgeError);
}

TEST_CASE("a fifteen-month history collapses to its distinct versions") {
    gen::Rng rng(41);
    std::vector<std::string> texts;
    std::set<std::string> hashes;
    while (texts.size() < 41) {
        auto t = gen::to_yaml(gen::random_model(rng));
        if (hashes.insert(compute_yaml_hash(t)).second) texts.push_back(t);
    }
    mock::Forge forge;
    const auto start = *parse_timestamp("2024-01-01T08:00:00Z");
    for (int i = 0; i < 60; ++i) {
        // First 41 commits introduce new content; the rest revert to earlier files.
        const auto& text = i < 41 ? texts[std::size_t(i)] : texts[std::size_t((i * 7) % 41)];
        const auto when = format_timestamp(start + std::chrono::hours(24 * 7 * i + i));
        forge.add_commit({std::string(38, 'f') + (i < 10 ? "0" : "") + std::to_string(i), when, {{".gitlab-ci.yml", text}}});
    }
    Store store;
    Bus bus;
    Twin twin(store, bus);
    twin.start();
    forge::ProjectHandle h{forge.base_url(), "42", std::nullopt, ".gitlab-ci.yml", ""};
    twin.register_project(h);
    auto report = twin.sync("42");
    CHECK(report.snapshots == 60);
    CHECK(twin.wait_idle());
    CHECK(twin.versions("42").size() == 41);
    CHECK(twin.generation_count() == 41);
    CHECK(store.count(Namespace::operational, "model/") == 41);
    CHECK(store.count(Namespace::analytical, "bpmn/") == 41);
    for (const auto& v : twin.versions("42")) CHECK(hashes.count(v.yaml_hash) == 1);
}

TEST_CASE("background tracking publishes changes") {
    mock::Forge forge;
    scenario::populate(forge);
    forge.set_visible_commits(1);
    Store store;
    Bus bus;
    Twin twin(store, bus);
    twin.start();
    forge::ProjectHandle h{forge.base_url(), "42", std::nullopt, ".gitlab-ci.yml", ""};
    twin.register_project(h);
    twin.sync("42");
    twin.start_tracking(std::chrono::milliseconds(10));
    forge.set_visible_commits(5);
    for (int i = 0; i < 300 && bus.last_sequence(Topic::change_detection) == 0; ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    CHECK(bus.last_sequence(Topic::change_detection) == 1);
    CHECK(twin.wait_idle());
    CHECK(twin.versions("42").size() == 2);
    twin.stop();
    auto st = twin.status();
    CHECK_FALSE(st.at("running").get<bool>());
}

TEST_CASE("status reports per-topic progress") {
    Store store;
    Bus bus;
    Twin twin(store, bus);
    CHECK(twin.wait_idle(std::chrono::milliseconds(10)));
    PipelineRun run;
    run.run_id = "1";
    run.pipeline_yaml_hash = std::string(64, 'a');
    const nlohmann::json payload{{"project_id", "p"}, {"run", run_to_json(run)}};

    Bus other;
    Twin stopped(store, other);
    stopped.start();
    stopped.stop();
    other.publish(Topic::execution_data, payload);
    CHECK_FALSE(stopped.wait_idle(std::chrono::milliseconds(10)));

    twin.start();
    bus.publish(Topic::execution_data, payload);
    CHECK(twin.wait_idle());
    auto st = twin.status();
    CHECK(st.at("running") == true);
    CHECK(st.at("topics").at("ExecutionData").at("handled") == 1);
    CHECK(st.at("topics").at("ExecutionData").at("processed") == 1);
    CHECK(st.at("generation_count") == 0);
    CHECK(twin.run("p", "1"));
}
