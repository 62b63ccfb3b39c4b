#pragma once

// Adapters between the library's diff output and the brute-force oracle,
// plus the random pair source and the algebraic checks used by the diff
// property tests and the acceptance run.

#include "diff_oracle.hpp"
#include "generators.hpp"

#include "pipetwin/diff.hpp"

#include <string>
#include <vector>

namespace diffprops {

inline std::set<std::string> fields_of(const pipetwin::diff::JobDelta& d) {
    std::set<std::string> f;
    for (const auto& c : d.field_changes) f.insert(c.field);
    return f;
}

inline oracle::DiffShape shape(const pipetwin::diff::StructuralDiff& d) {
    oracle::DiffShape s;
    s.added_jobs = {d.added_jobs.begin(), d.added_jobs.end()};
    s.removed_jobs = {d.removed_jobs.begin(), d.removed_jobs.end()};
    for (const auto& m : d.modified_jobs) s.modified_jobs[m.name] = fields_of(m);
    s.added_templates = {d.added_templates.begin(), d.added_templates.end()};
    s.removed_templates = {d.removed_templates.begin(), d.removed_templates.end()};
    for (const auto& m : d.modified_templates) s.modified_templates[m.name] = fields_of(m);
    s.added_stages = {d.added_stages.begin(), d.added_stages.end()};
    s.removed_stages = {d.removed_stages.begin(), d.removed_stages.end()};
    for (const auto& v : d.variable_changes.added) s.added_vars.insert(v.key);
    for (const auto& v : d.variable_changes.removed) s.removed_vars.insert(v.key);
    for (const auto& v : d.variable_changes.modified) s.modified_vars.insert(v.key);
    for (auto t : d.trigger_changes.added) s.added_triggers.insert(int(t));
    for (auto t : d.trigger_changes.removed) s.removed_triggers.insert(int(t));
    s.jobs_delta = d.summary.jobs_delta;
    s.stages_delta = d.summary.stages_delta;
    return s;
}

/// Either two independent models or a model and a mutation, at most 6 jobs each.
inline std::pair<pipetwin::Pipeline, pipetwin::Pipeline> random_pair(gen::Rng& rng) {
    auto a = gen::random_model(rng);
    auto b = gen::mutate(a, rng);
    if (rng() % 4 == 0) b = gen::random_model(rng);
    if (a.jobs.size() > 6) a.jobs.resize(6);
    if (b.jobs.size() > 6) b.jobs.resize(6);
    return {a, b};
}

/// Number of jobs added, removed or modified.
inline std::size_t distance(const pipetwin::diff::StructuralDiff& d) {
    return d.added_jobs.size() + d.removed_jobs.size() + d.modified_jobs.size();
}

/// diff(b, a) mirrors diff(a, b) entry for entry.
inline std::vector<std::string> symmetry_problems(const pipetwin::diff::StructuralDiff& ab,
                                                  const pipetwin::diff::StructuralDiff& ba) {
    std::vector<std::string> out;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) out.push_back(what);
    };
    expect(ab.added_jobs == ba.removed_jobs, "added/removed jobs");
    expect(ab.removed_jobs == ba.added_jobs, "removed/added jobs");
    expect(ab.added_templates == ba.removed_templates, "templates");
    expect(ab.removed_templates == ba.added_templates, "templates");
    expect(ab.added_stages == ba.removed_stages, "stages");
    expect(ab.removed_stages == ba.added_stages, "stages");
    expect(ab.trigger_changes.added == ba.trigger_changes.removed, "triggers");
    expect(ab.trigger_changes.removed == ba.trigger_changes.added, "triggers");
    expect(ab.summary.jobs_delta == -ba.summary.jobs_delta, "jobs_delta");
    expect(ab.summary.stages_delta == -ba.summary.stages_delta, "stages_delta");
    if (ab.modified_jobs.size() != ba.modified_jobs.size()) {
        out.push_back("modified job count");
        return out;
    }
    for (std::size_t k = 0; k < ab.modified_jobs.size(); ++k) {
        const auto& x = ab.modified_jobs[k];
        const auto& y = ba.modified_jobs[k];
        expect(x.name == y.name, "modified job " + x.name);
        if (x.field_changes.size() != y.field_changes.size()) {
            out.push_back("field count for " + x.name);
            continue;
        }
        for (std::size_t f = 0; f < x.field_changes.size(); ++f) {
            const auto& p = x.field_changes[f];
            const auto& q = y.field_changes[f];
            expect(p.field == q.field && p.before == q.after && p.after == q.before, x.name + "." + p.field);
        }
    }
    return out;
}

/// Deltas add up along a -> b -> c and the job distance obeys the triangle inequality.
inline std::vector<std::string> triangle_problems(const pipetwin::diff::StructuralDiff& ab,
                                                  const pipetwin::diff::StructuralDiff& bc,
                                                  const pipetwin::diff::StructuralDiff& ac) {
    std::vector<std::string> out;
    if (ac.summary.jobs_delta != ab.summary.jobs_delta + bc.summary.jobs_delta) out.push_back("jobs_delta sum");
    if (ac.summary.stages_delta != ab.summary.stages_delta + bc.summary.stages_delta)
        out.push_back("stages_delta sum");
    if (distance(ac) > distance(ab) + distance(bc)) out.push_back("distance triangle");
    return out;
}

} // namespace diffprops
