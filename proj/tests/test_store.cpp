#include "fixtures.hpp"

#include "pipetwin/store.hpp"

#include <doctest.h>

using namespace pipetwin::twin;
using nlohmann::json;

TEST_CASE("key layout") {
    CHECK(keys::encode_project("inkscape/inkscape") == "inkscape%2Finkscape");
    CHECK(keys::encode_project("42") == "42");
    CHECK(keys::project("a/b") == "project/a%2Fb");
    CHECK(keys::model("a/b", "h") == "model/a%2Fb/h");
    CHECK(keys::version("p", "h") == "version/p/h");
    CHECK(keys::run("p", "7") == "run/p/7");
    CHECK(keys::failure("p", "h") == "failure/p/h");
    CHECK(keys::bpmn("p", "h") == "bpmn/p/h");
    CHECK(to_string(Namespace::operational) == "operational");
    CHECK(to_string(Namespace::analytical) == "analytical");
}

TEST_CASE("put, get, overwrite, erase") {
    Store s;
    json v{{"schema", "x/1"}, {"n", 1}};
    s.put(Namespace::operational, "run/p/1", v);
    CHECK(s.get(Namespace::operational, "run/p/1") == v);
    CHECK_FALSE(s.get(Namespace::analytical, "run/p/1"));
    CHECK(s.contains(Namespace::operational, "run/p/1"));
    v["n"] = 2;
    s.put(Namespace::operational, "run/p/1", v);
    CHECK(s.get(Namespace::operational, "run/p/1")->at("n") == 2);
    CHECK(s.count(Namespace::operational) == 1);
    CHECK(s.erase(Namespace::operational, "run/p/1"));
    CHECK_FALSE(s.erase(Namespace::operational, "run/p/1"));
    CHECK_THROWS_AS(s.put(Namespace::operational, "k", json{{"n", 1}}), StoreError);
}

TEST_CASE("prefix listing is sorted and literal") {
    Store s;
    for (const char* k : {"run/p/2", "run/p/10", "run/q/1", "run/p_/1", "model/p/h"})
        s.put(Namespace::operational, k, json{{"schema", "x/1"}});
    CHECK(s.keys(Namespace::operational, "run/p/") == std::vector<std::string>{"run/p/10", "run/p/2"});
    CHECK(s.count(Namespace::operational, "run/") == 4);
    CHECK(s.keys(Namespace::operational, "run/p%").empty());
    CHECK(s.keys(Namespace::operational).size() == 5);
}

TEST_CASE("schema checks and corruption") {
    Store s;
    s.put(Namespace::analytical, "bpmn/p/h", json{{"schema", "pipetwin.bpmn/1"}});
    CHECK(s.get(Namespace::analytical, "bpmn/p/h", "pipetwin.bpmn/1"));
    CHECK_THROWS_AS(s.get(Namespace::analytical, "bpmn/p/h", "pipetwin.model/1"), Corrupt);
    s.put_raw(Namespace::analytical, "bpmn/p/bad", "{not json");
    CHECK_THROWS_AS(s.get(Namespace::analytical, "bpmn/p/bad"), Corrupt);
    s.put_raw(Namespace::analytical, "bpmn/p/noschema", "{\"a\":1}");
    CHECK_THROWS_AS(s.get(Namespace::analytical, "bpmn/p/noschema", "pipetwin.bpmn/1"), Corrupt);
}

TEST_CASE("data persists in a file and dumps deterministically") {
    fixtures::TempDir dir;
    const auto path = (dir / "twin.db").string();
    {
        Store s(path);
        s.put(Namespace::operational, "b", json{{"schema", "x/1"}, {"v", "é"}});
        s.put(Namespace::analytical, "a", json{{"schema", "y/1"}});
    }
    Store s(path);
    CHECK(s.get(Namespace::operational, "b")->at("v") == "é");
    auto d1 = s.dump();
    Store t;
    t.put(Namespace::analytical, "a", json{{"schema", "y/1"}});
    t.put(Namespace::operational, "b", json{{"schema", "x/1"}, {"v", "é"}});
    CHECK(t.dump() == d1);
    CHECK(d1.find("analytical") != std::string::npos);
    CHECK(d1.find("operational") != std::string::npos);
    CHECK_THROWS_AS(Store((dir / "missing" / "x.db").string()), StoreError);
}
