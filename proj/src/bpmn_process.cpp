#include "pipetwin/bpmn.hpp"

#include <algorithm>

namespace pipetwin::bpmn {

namespace {

struct JobInfo {
    const Job* job = nullptr;
    int row = 0;
    std::vector<std::string> same_preds; // in within-stage topological order
    std::size_t earlier_preds = 0;
    std::vector<std::string> same_succs;
    bool join = false;
    bool split = false;
};

struct StageInfo {
    std::string name;
    std::vector<std::string> order;
    std::map<std::string, JobInfo> jobs;
    std::vector<std::string> entries;
    std::vector<std::string> exits;
    bool fork = false;
    bool join = false;
};

std::vector<StageInfo> analyze(const Pipeline& p) {
    const auto graph = needs_graph(p);
    std::vector<StageInfo> stages;

    for (const auto& stage : p.stage_order) {
        std::vector<std::string> names;
        for (const auto& j : p.jobs) {
            if (j.stage == stage) names.push_back(j.name);
        }
        if (names.empty()) continue;
        std::sort(names.begin(), names.end());

        StageInfo info;
        info.name = stage;
        auto order = graph.topological_order(names);
        if (!order) throw GenerationError(GenerationErrorKind::invalid_pipeline, "needs cycle in stage '" + stage + "'");
        info.order = std::move(*order);

        std::map<std::string, int> position;
        for (std::size_t i = 0; i < info.order.size(); ++i) position[info.order[i]] = int(i);

        for (const auto& name : info.order) {
            JobInfo ji;
            ji.job = p.find_job(name);
            ji.row = position[name];
            for (const auto& need : ji.job->needs) {
                if (position.count(need)) {
                    ji.same_preds.push_back(need);
                } else {
                    ++ji.earlier_preds;
                }
            }
            std::sort(ji.same_preds.begin(), ji.same_preds.end(),
                      [&](const std::string& a, const std::string& b) { return position[a] < position[b]; });
            info.jobs.emplace(name, std::move(ji));
        }
        for (const auto& name : info.order) {
            for (const auto& pred : info.jobs[name].same_preds) info.jobs[pred].same_succs.push_back(name);
        }
        for (const auto& name : info.order) {
            auto& ji = info.jobs[name];
            const auto total = ji.same_preds.size() + ji.earlier_preds;
            ji.join = !ji.same_preds.empty() && total >= 2;
            ji.split = ji.same_succs.size() >= 2;
            if (ji.same_preds.empty() || (ji.join && ji.earlier_preds > 0)) info.entries.push_back(name);
            if (ji.same_succs.empty()) info.exits.push_back(name);
        }
        info.fork = info.entries.size() >= 2;
        info.join = info.exits.size() >= 2;
        stages.push_back(std::move(info));
    }
    return stages;
}

void check_collisions(const std::vector<std::string>& names, const char* what) {
    std::map<std::string, std::string> seen;
    for (const auto& n : names) {
        const auto id = sanitize_id(n);
        auto [it, inserted] = seen.emplace(id, n);
        if (!inserted && it->second != n) {
            throw GenerationError(GenerationErrorKind::sanitization_collision,
                                  std::string(what) + " names '" + it->second + "' and '" + n +
                                      "' both map to id '" + id + "'",
                                  {it->second, n});
        }
    }
}

std::string join_lines(const std::vector<std::string>& lines, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out += sep;
        out += lines[i];
    }
    return out;
}

std::vector<std::string> task_documentation(const Job& job) {
    std::vector<std::string> docs{script_documentation(job)};

    std::vector<std::string> conditions;
    for (const auto& c : job.conditions) {
        std::string line(to_string(c.kind));
        line += ": ";
        if (const auto* expr = std::get_if<std::string>(&c.expression)) {
            line += *expr;
        } else {
            line += join_lines(std::get<std::vector<std::string>>(c.expression), ", ");
        }
        conditions.push_back(std::move(line));
    }
    if (!conditions.empty()) docs.push_back("conditions:\n" + join_lines(conditions, "\n"));

    std::vector<std::string> attrs;
    if (!job.needs.empty()) attrs.push_back("needs: " + join_lines(job.needs, ", "));
    if (job.allow_failure) attrs.push_back("allow_failure: true");
    if (job.retry) attrs.push_back("retry: " + std::to_string(*job.retry));
    if (!attrs.empty()) docs.push_back(join_lines(attrs, "\n"));
    return docs;
}

class Builder {
public:
    explicit Builder(ProcessModel& m) : m_(m) {}

    FlowNode& add(FlowNode node) {
        m_.nodes.push_back(std::move(node));
        return m_.nodes.back();
    }

    void flow(const std::string& source, const std::string& target) {
        char id[32];
        std::snprintf(id, sizeof id, "flow_%04d", ++flow_counter_);
        m_.flows.push_back({id, source, target});
    }

private:
    ProcessModel& m_;
    int flow_counter_ = 0;
};

} // namespace

ActivityKind map_activity(const Job& job) {
    return job.when == WhenPolicy::manual ? ActivityKind::user_task : ActivityKind::task;
}

std::string script_documentation(const Job& job) { return join_lines(job.script, "\n"); }

EventKind start_event_kind(TriggerType trigger) {
    switch (trigger) {
    case TriggerType::push:
    case TriggerType::schedule:
    case TriggerType::tag_push: return EventKind::signal;
    case TriggerType::merge_request: return EventKind::message;
    case TriggerType::api:
    case TriggerType::web: return EventKind::none;
    }
    return EventKind::none;
}

StartEventPlan plan_start_events(std::span<const Trigger> triggers) {
    StartEventPlan plan;
    if (triggers.empty()) {
        plan.events.push_back({std::nullopt, EventKind::none});
        return plan;
    }
    for (const auto& t : triggers) plan.events.push_back({t.trigger_type, start_event_kind(t.trigger_type)});
    plan.exclusive_merge = plan.events.size() >= 2;
    return plan;
}

GatewayPlan plan_gateways(const Pipeline& pipeline) {
    GatewayPlan plan;
    for (const auto& stage : analyze(pipeline)) {
        plan.stages[stage.name] = {stage.fork, stage.join};
        for (const auto& [name, info] : stage.jobs) {
            if (info.join) plan.job_joins.insert(name);
            if (info.split) plan.job_splits.insert(name);
        }
    }
    return plan;
}

std::string sanitize_id(std::string_view name) {
    std::string out(name);
    for (auto& c : out) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
        if (!ok) c = '_';
    }
    return out;
}

GenerationError::GenerationError(GenerationErrorKind kind, const std::string& message,
                                 std::vector<std::string> names, std::vector<Violation> violations)
    : Error(message), kind_(kind), names_(std::move(names)), violations_(std::move(violations)) {}

MissingElement::MissingElement(std::string name)
    : Error("no BPMN element for job '" + name + "'"), name_(std::move(name)) {}

const FlowNode* ProcessModel::find(const std::string& id) const {
    auto it = std::find_if(nodes.begin(), nodes.end(), [&](const FlowNode& n) { return n.id == id; });
    return it == nodes.end() ? nullptr : &*it;
}

ProcessModel build_process(const Pipeline& p) {
    if (auto violations = validate(p); !violations.empty()) {
        std::string msg = "pipeline is invalid:";
        for (const auto& v : violations) msg += " [" + v.rule + " " + v.entity + "]";
        throw GenerationError(GenerationErrorKind::invalid_pipeline, msg, {}, std::move(violations));
    }
    {
        std::vector<std::string> job_names;
        for (const auto& j : p.jobs) job_names.push_back(j.name);
        check_collisions(job_names, "job");
        check_collisions(p.stage_order, "stage");
    }

    const auto stages = analyze(p);
    ProcessModel m;
    Builder b(m);

    // Start section in column 0.
    const auto start_plan = plan_start_events(p.triggers);
    std::vector<std::string> start_ids;
    for (std::size_t i = 0; i < start_plan.events.size(); ++i) {
        const auto& spec = start_plan.events[i];
        FlowNode n;
        n.kind = NodeKind::start_event;
        n.event_kind = spec.kind;
        n.trigger = spec.trigger;
        n.id = spec.trigger ? "start_" + std::string(to_string(*spec.trigger)) : "start";
        n.name = spec.trigger ? std::string(to_string(*spec.trigger)) : "";
        n.placement = {0, int(i), int(i), Slot::center};
        start_ids.push_back(b.add(std::move(n)).id);
    }
    std::string previous_out = start_ids.front();
    if (start_plan.exclusive_merge) {
        FlowNode x;
        x.kind = NodeKind::exclusive_gateway;
        x.id = "gateway_trigger_merge";
        x.name = "trigger";
        x.placement = {0, 0, int(start_ids.size()) - 1, Slot::right};
        b.add(x);
        m.gateway_ids.push_back(x.id);
        for (const auto& s : start_ids) b.flow(s, x.id);
        previous_out = x.id;
    }

    int column = 0;
    for (const auto& st : stages) {
        ++column;
        const auto sid = sanitize_id(st.name);
        Lane lane{"lane_" + sid, st.name, column, {}};
        const int last_row = int(st.order.size()) - 1;

        auto add_gateway = [&](const std::string& id, Placement pl, bool diverging) {
            FlowNode g;
            g.kind = NodeKind::parallel_gateway;
            g.id = id;
            g.lane = st.name;
            g.diverging = diverging;
            g.placement = pl;
            b.add(std::move(g));
            m.gateway_ids.push_back(id);
            lane.node_ids.push_back(id);
        };

        auto task_id = [](const std::string& job) { return "task_" + sanitize_id(job); };
        auto join_id = [](const std::string& job) { return "gateway_needs_join_" + sanitize_id(job); };
        auto split_id = [](const std::string& job) { return "gateway_needs_split_" + sanitize_id(job); };
        auto in_port = [&](const std::string& job) { return st.jobs.at(job).join ? join_id(job) : task_id(job); };
        auto out_port = [&](const std::string& job) { return st.jobs.at(job).split ? split_id(job) : task_id(job); };

        const std::string fork_id = "gateway_fork_" + sid;
        const std::string stage_join_id = "gateway_join_" + sid;

        if (st.fork) add_gateway(fork_id, {column, 0, 0, Slot::left}, true);
        for (const auto& name : st.order) {
            const auto& info = st.jobs.at(name);
            if (info.join) add_gateway(join_id(name), {column, info.row, info.row, Slot::left}, false);

            FlowNode t;
            t.kind = map_activity(*info.job) == ActivityKind::user_task ? NodeKind::user_task : NodeKind::task;
            t.id = task_id(name);
            t.name = name;
            t.lane = st.name;
            t.documentation = task_documentation(*info.job);
            t.placement = {column, info.row, info.row, Slot::center};
            b.add(std::move(t));
            lane.node_ids.push_back(task_id(name));
            m.element_index[name] = task_id(name);

            if (info.split) add_gateway(split_id(name), {column, info.row, info.row, Slot::right}, true);
        }
        if (st.join) add_gateway(stage_join_id, {column, last_row, last_row, Slot::right}, false);

        b.flow(previous_out, st.fork ? fork_id : in_port(st.entries.front()));
        if (st.fork) {
            for (const auto& e : st.entries) b.flow(fork_id, in_port(e));
        }
        for (const auto& name : st.order) {
            const auto& info = st.jobs.at(name);
            for (const auto& pred : info.same_preds) b.flow(out_port(pred), in_port(name));
            if (info.join) b.flow(join_id(name), task_id(name));
            if (info.split) b.flow(task_id(name), split_id(name));
        }
        if (st.join) {
            for (const auto& x : st.exits) b.flow(out_port(x), stage_join_id);
        }
        previous_out = st.join ? stage_join_id : out_port(st.exits.front());

        m.lane_index[st.name] = lane.id;
        m.lanes.push_back(std::move(lane));
    }

    // End events go on every node left without an outgoing flow.
    const int end_column = column + 1;
    std::set<std::string> has_outgoing;
    for (const auto& f : m.flows) has_outgoing.insert(f.source);
    std::vector<std::string> terminals;
    for (const auto& n : m.nodes) {
        if (!has_outgoing.count(n.id)) terminals.push_back(n.id);
    }
    int end_row = 0;
    for (const auto& t : terminals) {
        FlowNode e;
        e.kind = NodeKind::end_event;
        e.id = "end_" + t;
        e.placement = {end_column, end_row, end_row, Slot::center};
        ++end_row;
        b.add(e);
        b.flow(t, e.id);
    }
    m.column_count = end_column + 1;
    return m;
}

BpmnDocument generate(const Pipeline& pipeline, const LayoutConfig& config) {
    const auto model = build_process(pipeline);
    const auto plan = layout(model, config);
    BpmnDocument doc;
    doc.xml = serialize(model, plan);
    doc.element_index = model.element_index;
    doc.gateway_ids = model.gateway_ids;
    doc.lane_index = model.lane_index;
    return doc;
}

} // namespace pipetwin::bpmn
