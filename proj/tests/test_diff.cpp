#include "diff_oracle.hpp"
#include "diff_props.hpp"
#include "fixtures.hpp"
#include "generators.hpp"

#include "pipetwin/bpmn.hpp"
#include "pipetwin/diff.hpp"
#include "pipetwin/model_json.hpp"

#include <doctest.h>

using namespace pipetwin;
using namespace pipetwin::diff;

namespace {

using diffprops::fields_of;
using diffprops::random_pair;
using diffprops::shape;

} // namespace

TEST_CASE("identical models have an empty diff") {
    auto p = fixtures::parse_file("inkscape_v1.yml");
    auto d = diff::diff(p, p);
    CHECK(d.empty());
    CHECK(d.summary.jobs_before == 15);
    CHECK(d.summary.jobs_delta == 0);
    CHECK(format_summary(d).find("0 added, 0 removed, 0 modified") != std::string::npos);
}

TEST_CASE("Inkscape V1 to V2") {
    auto v1 = fixtures::parse_file("inkscape_v1.yml");
    auto v2 = fixtures::parse_file("inkscape_v2.yml");
    auto d = diff::diff(v1, v2);
    CHECK(d.added_jobs == std::vector<std::string>{"deps:macos", "inkscape:android"});
    CHECK(d.removed_jobs.empty());
    REQUIRE(d.modified_jobs.size() == 1);
    CHECK(d.modified_jobs[0].name == "inkscape:macos");
    CHECK(d.modified_jobs[0].field_changes.size() == 8);
    CHECK(fields_of(d.modified_jobs[0]) == std::set<std::string>{"image", "needs", "conditions", "script",
                                                                  "variables", "allow_failure", "tags", "retry"});
    CHECK(d.added_templates == std::vector<std::string>{".macos"});
    CHECK(d.removed_templates.empty());
    CHECK(d.modified_templates.empty());
    CHECK(d.summary.jobs_before == 15);
    CHECK(d.summary.jobs_after == 17);
    CHECK(d.summary.jobs_delta == 2);
    CHECK(d.summary.stages_delta == 0);
    CHECK(d.variable_changes.empty());
    CHECK(d.trigger_changes.empty());

    auto text = format_summary(d);
    CHECK(text.find("jobs 15 → 17 (+2)") != std::string::npos);
    CHECK(text.find("2 added, 0 removed, 1 modified") != std::string::npos);

    auto& needs = d.modified_jobs[0].field_changes[1];
    CHECK(needs.field == "needs");
    CHECK(needs.before == nlohmann::json::array());
    CHECK(needs.after == nlohmann::json::array({"deps:macos"}));
    CHECK(shape(d) == oracle::brute_force_diff(v1, v2));
}

TEST_CASE("field changes follow the report order") {
    Job a;
    a.name = "j";
    a.stage = "test";
    Job b = a;
    b.retry = 1;
    b.stage = "build";
    b.tags = {"x"};
    auto changes = compare_jobs(a, b);
    REQUIRE(changes.size() == 3);
    CHECK(changes[0].field == "stage");
    CHECK(changes[1].field == "tags");
    CHECK(changes[2].field == "retry");
    CHECK(changes[2].before.is_null());

    Job c = a;
    c.tags = {"p", "q"};
    Job d = a;
    d.tags = {"q", "p"};
    CHECK(compare_jobs(c, d).empty());
    c.variables = {{"A", "1", VariableScope::job}, {"B", "2", VariableScope::job}};
    d.variables = {{"B", "2", VariableScope::job}, {"A", "1", VariableScope::job}};
    CHECK(compare_jobs(c, d).empty());
    d.script = {"x", "y"};
    c.script = {"y", "x"};
    CHECK(compare_jobs(c, d).size() == 1);
}

TEST_CASE("template comparison includes extends") {
    TemplateBody a;
    TemplateBody b;
    b.extends = {".base"};
    b.image = "x";
    auto changes = compare_templates(a, b);
    REQUIRE(changes.size() == 2);
    CHECK(changes[0].field == "image");
    CHECK(changes[1].field == "extends");
}

TEST_CASE("diff JSON round-trips") {
    auto d = diff::diff(fixtures::parse_file("inkscape_v1.yml"), fixtures::parse_file("inkscape_v2.yml"));
    auto j = to_json(d);
    CHECK(j.at("schema") == kDiffSchema);
    CHECK(diff_from_json(j) == d);
    CHECK(diff_from_json(nlohmann::json::parse(j.dump())) == d);
}

TEST_CASE("diff projects onto both documents") {
    auto v1 = fixtures::parse_file("inkscape_v1.yml");
    auto v2 = fixtures::parse_file("inkscape_v2.yml");
    auto b1 = bpmn::generate(v1);
    auto b2 = bpmn::generate(v2);
    auto [o1, o2] = project(diff::diff(v1, v2), b1, b2);
    CHECK(o1.elements == std::map<std::string, ChangeKind>{{b1.element_index.at("inkscape:macos"), ChangeKind::modified}});
    CHECK(o2.elements == std::map<std::string, ChangeKind>{{b2.element_index.at("inkscape:macos"), ChangeKind::modified},
                                                           {b2.element_index.at("deps:macos"), ChangeKind::added},
                                                           {b2.element_index.at("inkscape:android"), ChangeKind::added}});
    CHECK(to_json(o2).dump().find("\"added\"") != std::string::npos);

    auto [r1, r2] = project(diff::diff(v2, v1), b2, b1);
    CHECK(r1.elements.at(b2.element_index.at("deps:macos")) == ChangeKind::removed);
    CHECK(r2.elements.size() == 1);

    CHECK_THROWS_AS(project(diff::diff(v1, v2), b1, b1), bpmn::MissingElement);
}

TEST_CASE("property: diff equals the brute-force oracle on random pairs") {
    gen::Rng rng(500);
    for (int i = 0; i < 500; ++i) {
        auto [a, b] = random_pair(rng);
        INFO(model_to_json(a).dump() << "\n" << model_to_json(b).dump());
        CHECK(shape(diff::diff(a, b)) == oracle::brute_force_diff(a, b));
    }
}

TEST_CASE("property: symmetry and triangle") {
    gen::Rng rng(501);
    for (int i = 0; i < 300; ++i) {
        auto a = gen::random_model(rng);
        auto b = gen::mutate(a, rng);
        auto c = gen::mutate(b, rng);
        auto ab = diff::diff(a, b);
        auto bc = diff::diff(b, c);
        auto ac = diff::diff(a, c);
        CHECK(diffprops::symmetry_problems(ab, diff::diff(b, a)).empty());
        CHECK(diffprops::triangle_problems(ab, bc, ac).empty());
        CHECK(diff::diff(a, a).empty());
    }
}
