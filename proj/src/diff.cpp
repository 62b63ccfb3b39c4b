#include "pipetwin/diff.hpp"

#include "pipetwin/model_json.hpp"

#include <algorithm>
#include <set>

namespace pipetwin::diff {

using nlohmann::json;

namespace {

json as_set(const json& list) {
    if (!list.is_array()) return list;
    std::set<std::string> s;
    for (const auto& v : list) s.insert(v.get<std::string>());
    return json(s);
}

json variables_by_key(const json& list) {
    if (!list.is_array()) return list;
    auto sorted = list;
    std::sort(sorted.begin(), sorted.end(),
              [](const json& a, const json& b) { return a.at("key") < b.at("key"); });
    return sorted;
}

bool field_equal(std::string_view field, const json& a, const json& b) {
    if (field == "needs" || field == "tags") return as_set(a) == as_set(b);
    if (field == "variables") return variables_by_key(a) == variables_by_key(b);
    return a == b;
}

template <std::size_t N>
std::vector<FieldChange> compare_snapshots(const json& a, const json& b,
                                           const std::array<std::string_view, N>& fields) {
    std::vector<FieldChange> out;
    for (auto f : fields) {
        const std::string key(f);
        const json before = a.contains(key) ? a.at(key) : json(nullptr);
        const json after = b.contains(key) ? b.at(key) : json(nullptr);
        if (!field_equal(f, before, after)) out.push_back({key, before, after});
    }
    return out;
}

template <typename T, typename Key>
std::map<std::string, const T*> index_by(const std::vector<T>& items, Key key) {
    std::map<std::string, const T*> out;
    for (const auto& item : items) out.emplace(key(item), &item);
    return out;
}

template <typename M>
std::vector<std::string> keys_missing_from(const M& a, const M& b) {
    std::vector<std::string> out;
    for (const auto& [k, _] : a) {
        if (!b.count(k)) out.push_back(k);
    }
    return out;
}

std::vector<std::string> set_minus(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::vector<std::string> out;
    std::set_difference(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(out));
    return out;
}

std::vector<TriggerType> trigger_minus(const std::vector<Trigger>& a, const std::vector<Trigger>& b) {
    std::set<std::string> sb;
    for (const auto& t : b) sb.insert(std::string(to_string(t.trigger_type)));
    std::map<std::string, TriggerType> out;
    for (const auto& t : a) {
        const std::string name(to_string(t.trigger_type));
        if (!sb.count(name)) out.emplace(name, t.trigger_type);
    }
    std::vector<TriggerType> v;
    for (const auto& [_, t] : out) v.push_back(t);
    return v;
}

std::string compact(const json& v) {
    constexpr std::size_t kMax = 72;
    auto s = v.dump();
    if (s.size() > kMax) s = s.substr(0, kMax - 3) + "...";
    return s;
}

std::string signed_int(int v) { return (v >= 0 ? "+" : "") + std::to_string(v); }

template <typename T>
T get(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("diff: field '") + key + "': " + e.what());
    }
}

json deltas_json(const std::vector<JobDelta>& deltas) {
    json out = json::array();
    for (const auto& d : deltas) {
        json changes = json::array();
        for (const auto& c : d.field_changes)
            changes.push_back({{"field", c.field}, {"before", c.before}, {"after", c.after}});
        out.push_back({{"name", d.name}, {"field_changes", changes}});
    }
    return out;
}

std::vector<JobDelta> deltas_from_json(const json& arr) {
    std::vector<JobDelta> out;
    if (!arr.is_array()) throw SchemaError("diff: delta list must be an array");
    for (const auto& d : arr) {
        JobDelta jd{get<std::string>(d, "name"), {}};
        for (const auto& c : d.at("field_changes"))
            jd.field_changes.push_back({get<std::string>(c, "field"), c.at("before"), c.at("after")});
        out.push_back(std::move(jd));
    }
    return out;
}

} // namespace

bool StructuralDiff::empty() const {
    return added_jobs.empty() && removed_jobs.empty() && modified_jobs.empty() && added_templates.empty() &&
           removed_templates.empty() && modified_templates.empty() && added_stages.empty() &&
           removed_stages.empty() && variable_changes.empty() && trigger_changes.empty();
}

std::vector<FieldChange> compare_jobs(const Job& before, const Job& after) {
    return compare_snapshots(json(before), json(after), kJobFields);
}

std::vector<FieldChange> compare_templates(const TemplateBody& before, const TemplateBody& after) {
    return compare_snapshots(json(before), json(after), kTemplateFields);
}

StructuralDiff diff(const Pipeline& v1, const Pipeline& v2) {
    StructuralDiff d;

    const auto jobs1 = index_by(v1.jobs, [](const Job& j) { return j.name; });
    const auto jobs2 = index_by(v2.jobs, [](const Job& j) { return j.name; });
    d.added_jobs = keys_missing_from(jobs2, jobs1);
    d.removed_jobs = keys_missing_from(jobs1, jobs2);
    for (const auto& [name, job] : jobs1) {
        auto it = jobs2.find(name);
        if (it == jobs2.end()) continue;
        if (auto changes = compare_jobs(*job, *it->second); !changes.empty())
            d.modified_jobs.push_back({name, std::move(changes)});
    }

    const auto tpl1 = index_by(v1.templates, [](const Template& t) { return t.name; });
    const auto tpl2 = index_by(v2.templates, [](const Template& t) { return t.name; });
    d.added_templates = keys_missing_from(tpl2, tpl1);
    d.removed_templates = keys_missing_from(tpl1, tpl2);
    for (const auto& [name, tpl] : tpl1) {
        auto it = tpl2.find(name);
        if (it == tpl2.end()) continue;
        if (auto changes = compare_templates(tpl->body, it->second->body); !changes.empty())
            d.modified_templates.push_back({name, std::move(changes)});
    }

    d.added_stages = set_minus(v2.stage_order, v1.stage_order);
    d.removed_stages = set_minus(v1.stage_order, v2.stage_order);

    const auto vars1 = index_by(v1.variables, [](const Variable& v) { return v.key; });
    const auto vars2 = index_by(v2.variables, [](const Variable& v) { return v.key; });
    for (const auto& k : keys_missing_from(vars2, vars1)) d.variable_changes.added.push_back(*vars2.at(k));
    for (const auto& k : keys_missing_from(vars1, vars2)) d.variable_changes.removed.push_back(*vars1.at(k));
    for (const auto& [key, var] : vars1) {
        auto it = vars2.find(key);
        if (it != vars2.end() && it->second->value != var->value)
            d.variable_changes.modified.push_back({key, var->value, it->second->value});
    }

    d.trigger_changes.added = trigger_minus(v2.triggers, v1.triggers);
    d.trigger_changes.removed = trigger_minus(v1.triggers, v2.triggers);

    auto& s = d.summary;
    s.stages_before = int(v1.stage_order.size());
    s.stages_after = int(v2.stage_order.size());
    s.stages_delta = s.stages_after - s.stages_before;
    s.jobs_before = int(v1.jobs.size());
    s.jobs_after = int(v2.jobs.size());
    s.jobs_delta = s.jobs_after - s.jobs_before;
    return d;
}

std::string_view to_string(ChangeKind kind) {
    switch (kind) {
    case ChangeKind::added: return "added";
    case ChangeKind::removed: return "removed";
    case ChangeKind::modified: return "modified";
    }
    return "modified";
}

std::pair<DiffOverlay, DiffOverlay> project(const StructuralDiff& d, const bpmn::BpmnDocument& b1,
                                            const bpmn::BpmnDocument& b2) {
    DiffOverlay o1, o2;
    auto mark = [](DiffOverlay& o, const bpmn::BpmnDocument& doc, const std::string& job, ChangeKind kind) {
        auto it = doc.element_index.find(job);
        if (it == doc.element_index.end()) throw bpmn::MissingElement(job);
        o.elements[it->second] = kind;
    };
    for (const auto& j : d.removed_jobs) mark(o1, b1, j, ChangeKind::removed);
    for (const auto& j : d.added_jobs) mark(o2, b2, j, ChangeKind::added);
    for (const auto& m : d.modified_jobs) {
        mark(o1, b1, m.name, ChangeKind::modified);
        mark(o2, b2, m.name, ChangeKind::modified);
    }
    // Stages without jobs have no lane.
    for (const auto& s : d.removed_stages) {
        if (auto it = b1.lane_index.find(s); it != b1.lane_index.end()) o1.elements[it->second] = ChangeKind::removed;
    }
    for (const auto& s : d.added_stages) {
        if (auto it = b2.lane_index.find(s); it != b2.lane_index.end()) o2.elements[it->second] = ChangeKind::added;
    }
    return {std::move(o1), std::move(o2)};
}

json to_json(const StructuralDiff& d) {
    json vars_modified = json::array();
    for (const auto& m : d.variable_changes.modified)
        vars_modified.push_back({{"key", m.key}, {"before", m.before}, {"after", m.after}});
    const auto& s = d.summary;
    return json{
        {"schema", kDiffSchema},
        {"added_jobs", d.added_jobs},
        {"removed_jobs", d.removed_jobs},
        {"modified_jobs", deltas_json(d.modified_jobs)},
        {"added_templates", d.added_templates},
        {"removed_templates", d.removed_templates},
        {"modified_templates", deltas_json(d.modified_templates)},
        {"added_stages", d.added_stages},
        {"removed_stages", d.removed_stages},
        {"variable_changes",
         {{"added", d.variable_changes.added}, {"removed", d.variable_changes.removed}, {"modified", vars_modified}}},
        {"trigger_changes", {{"added", d.trigger_changes.added}, {"removed", d.trigger_changes.removed}}},
        {"summary",
         {{"stages_before", s.stages_before},
          {"stages_after", s.stages_after},
          {"stages_delta", s.stages_delta},
          {"jobs_before", s.jobs_before},
          {"jobs_after", s.jobs_after},
          {"jobs_delta", s.jobs_delta}}},
    };
}

StructuralDiff diff_from_json(const json& doc) {
    if (!doc.is_object() || doc.value("schema", "") != kDiffSchema) throw SchemaError("diff: wrong or missing schema");
    try {
        StructuralDiff d;
        d.added_jobs = get<std::vector<std::string>>(doc, "added_jobs");
        d.removed_jobs = get<std::vector<std::string>>(doc, "removed_jobs");
        d.modified_jobs = deltas_from_json(doc.at("modified_jobs"));
        d.added_templates = get<std::vector<std::string>>(doc, "added_templates");
        d.removed_templates = get<std::vector<std::string>>(doc, "removed_templates");
        d.modified_templates = deltas_from_json(doc.at("modified_templates"));
        d.added_stages = get<std::vector<std::string>>(doc, "added_stages");
        d.removed_stages = get<std::vector<std::string>>(doc, "removed_stages");
        const auto& vc = doc.at("variable_changes");
        d.variable_changes.added = vc.at("added").get<std::vector<Variable>>();
        d.variable_changes.removed = vc.at("removed").get<std::vector<Variable>>();
        for (const auto& m : vc.at("modified"))
            d.variable_changes.modified.push_back(
                {get<std::string>(m, "key"), get<std::string>(m, "before"), get<std::string>(m, "after")});
        const auto& tc = doc.at("trigger_changes");
        d.trigger_changes.added = tc.at("added").get<std::vector<TriggerType>>();
        d.trigger_changes.removed = tc.at("removed").get<std::vector<TriggerType>>();
        const auto& s = doc.at("summary");
        d.summary = {get<int>(s, "stages_before"), get<int>(s, "stages_after"), get<int>(s, "stages_delta"),
                     get<int>(s, "jobs_before"),   get<int>(s, "jobs_after"),   get<int>(s, "jobs_delta")};
        return d;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("diff: ") + e.what());
    }
}

json to_json(const DiffOverlay& overlay) {
    json out = json::object();
    for (const auto& [id, kind] : overlay.elements) out[id] = std::string(to_string(kind));
    return out;
}

std::string format_summary(const StructuralDiff& d) {
    const auto& s = d.summary;
    std::string out;
    out += "stages " + std::to_string(s.stages_before) + " → " + std::to_string(s.stages_after) + " (" +
           signed_int(s.stages_delta) + ")\n";
    out += "jobs " + std::to_string(s.jobs_before) + " → " + std::to_string(s.jobs_after) + " (" +
           signed_int(s.jobs_delta) + ")\n";
    out += std::to_string(d.added_jobs.size()) + " added, " + std::to_string(d.removed_jobs.size()) + " removed, " +
           std::to_string(d.modified_jobs.size()) + " modified\n";

    auto changes = [&](const char* what, const std::vector<JobDelta>& deltas) {
        for (const auto& m : deltas) {
            for (const auto& c : m.field_changes)
                out += std::string("~ ") + what + " " + m.name + " " + c.field + ": " + compact(c.before) + " → " +
                       compact(c.after) + "\n";
        }
    };
    for (const auto& n : d.added_stages) out += "+ stage " + n + "\n";
    for (const auto& n : d.removed_stages) out += "- stage " + n + "\n";
    for (const auto& n : d.added_jobs) out += "+ job " + n + "\n";
    for (const auto& n : d.removed_jobs) out += "- job " + n + "\n";
    changes("job", d.modified_jobs);
    for (const auto& n : d.added_templates) out += "+ template " + n + "\n";
    for (const auto& n : d.removed_templates) out += "- template " + n + "\n";
    changes("template", d.modified_templates);
    for (const auto& v : d.variable_changes.added) out += "+ variable " + v.key + "=" + v.value + "\n";
    for (const auto& v : d.variable_changes.removed) out += "- variable " + v.key + "\n";
    for (const auto& m : d.variable_changes.modified)
        out += "~ variable " + m.key + ": " + m.before + " → " + m.after + "\n";
    for (auto t : d.trigger_changes.added) out += "+ trigger " + std::string(to_string(t)) + "\n";
    for (auto t : d.trigger_changes.removed) out += "- trigger " + std::string(to_string(t)) + "\n";
    if (d.empty()) out += "no structural changes\n";
    return out;
}

} // namespace pipetwin::diff
