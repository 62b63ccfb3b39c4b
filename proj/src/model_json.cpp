#include "pipetwin/model_json.hpp"

namespace pipetwin {

using nlohmann::json;

namespace {

const json& field(const json& j, const char* key) {
    if (!j.is_object()) throw SchemaError("expected an object");
    auto it = j.find(key);
    if (it == j.end()) throw SchemaError(std::string("missing field '") + key + "'");
    return *it;
}

template <typename T>
T get_field(const json& j, const char* key) {
    try {
        return field(j, key).get<T>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("field '") + key + "': " + e.what());
    }
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key) {
    if (!j.is_object()) throw SchemaError("expected an object");
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("field '") + key + "': " + e.what());
    }
}

template <typename T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

json timestamp_json(const std::optional<Timestamp>& t) {
    return t ? json(format_timestamp(*t)) : json(nullptr);
}

std::optional<Timestamp> get_timestamp(const json& j, const char* key) {
    auto s = get_optional<std::string>(j, key);
    if (!s) return std::nullopt;
    auto t = parse_timestamp(*s);
    if (!t) throw SchemaError(std::string("field '") + key + "': bad timestamp '" + *s + "'");
    return t;
}

template <typename E, typename Parse>
E enum_from(const json& j, Parse parse, const char* what) {
    if (!j.is_string()) throw SchemaError(std::string(what) + " must be a string");
    auto v = parse(j.get_ref<const std::string&>());
    if (!v) throw SchemaError(std::string("unknown ") + what + " '" + j.get<std::string>() + "'");
    return *v;
}

void check_schema(const json& doc, std::string_view expected) {
    auto schema = get_field<std::string>(doc, "schema");
    if (schema != expected)
        throw SchemaError("schema '" + schema + "' where '" + std::string(expected) + "' expected");
}

} // namespace

void to_json(json& j, WhenPolicy v) { j = std::string(to_string(v)); }
void from_json(const json& j, WhenPolicy& v) { v = enum_from<WhenPolicy>(j, parse_when_policy, "when policy"); }
void to_json(json& j, TriggerType v) { j = std::string(to_string(v)); }
void from_json(const json& j, TriggerType& v) { v = enum_from<TriggerType>(j, parse_trigger_type, "trigger type"); }
void to_json(json& j, ExecutionStatus v) { j = std::string(to_string(v)); }
void from_json(const json& j, ExecutionStatus& v) {
    v = enum_from<ExecutionStatus>(j, parse_execution_status, "execution status");
}

void to_json(json& j, const Variable& v) {
    j = json{{"key", v.key}, {"value", v.value}, {"scope", std::string(to_string(v.scope))}};
}

void from_json(const json& j, Variable& v) {
    v.key = get_field<std::string>(j, "key");
    v.value = get_field<std::string>(j, "value");
    v.scope = enum_from<VariableScope>(field(j, "scope"), parse_variable_scope, "variable scope");
}

void to_json(json& j, const Condition& c) {
    j = json{{"kind", std::string(to_string(c.kind))}};
    std::visit([&](const auto& payload) { j["expression"] = payload; }, c.expression);
}

void from_json(const json& j, Condition& c) {
    c.kind = enum_from<ConditionKind>(field(j, "kind"), parse_condition_kind, "condition kind");
    const auto& expr = field(j, "expression");
    if (c.kind == ConditionKind::if_expr) {
        if (!expr.is_string()) throw SchemaError("if condition expression must be a string");
        c.expression = expr.get<std::string>();
    } else {
        if (!expr.is_array()) throw SchemaError("changes/exists expression must be a list");
        c.expression = get_field<std::vector<std::string>>(j, "expression");
    }
}

void to_json(json& j, const Trigger& t) { j = json{{"trigger_type", t.trigger_type}}; }
void from_json(const json& j, Trigger& t) { t.trigger_type = field(j, "trigger_type").get<TriggerType>(); }

void to_json(json& j, const Job& job) {
    j = json{
        {"name", job.name},
        {"stage", job.stage},
        {"script", job.script},
        {"image", optional_json(job.image)},
        {"when", job.when},
        {"allow_failure", job.allow_failure},
        {"needs", job.needs},
        {"conditions", job.conditions},
        {"variables", job.variables},
        {"tags", job.tags},
        {"retry", optional_json(job.retry)},
    };
}

void from_json(const json& j, Job& job) {
    job.name = get_field<std::string>(j, "name");
    job.stage = get_field<std::string>(j, "stage");
    job.script = get_field<std::vector<std::string>>(j, "script");
    job.image = get_optional<std::string>(j, "image");
    job.when = field(j, "when").get<WhenPolicy>();
    job.allow_failure = get_field<bool>(j, "allow_failure");
    job.needs = get_field<std::vector<std::string>>(j, "needs");
    job.conditions = field(j, "conditions").get<std::vector<Condition>>();
    job.variables = field(j, "variables").get<std::vector<Variable>>();
    job.tags = get_field<std::vector<std::string>>(j, "tags");
    job.retry = get_optional<int>(j, "retry");
}

void to_json(json& j, const TemplateBody& b) {
    j = json::object();
    if (b.stage) j["stage"] = *b.stage;
    if (b.script) j["script"] = *b.script;
    if (b.image) j["image"] = *b.image;
    if (b.when) j["when"] = *b.when;
    if (b.allow_failure) j["allow_failure"] = *b.allow_failure;
    if (b.needs) j["needs"] = *b.needs;
    if (b.conditions) j["conditions"] = *b.conditions;
    if (b.variables) j["variables"] = *b.variables;
    if (b.tags) j["tags"] = *b.tags;
    if (b.retry) j["retry"] = *b.retry;
    if (!b.extends.empty()) j["extends"] = b.extends;
}

void from_json(const json& j, TemplateBody& b) {
    if (!j.is_object()) throw SchemaError("template body must be an object");
    b.stage = get_optional<std::string>(j, "stage");
    b.script = get_optional<std::vector<std::string>>(j, "script");
    b.image = get_optional<std::string>(j, "image");
    if (j.contains("when")) b.when = j.at("when").get<WhenPolicy>();
    b.allow_failure = get_optional<bool>(j, "allow_failure");
    b.needs = get_optional<std::vector<std::string>>(j, "needs");
    if (j.contains("conditions")) b.conditions = j.at("conditions").get<std::vector<Condition>>();
    if (j.contains("variables")) b.variables = j.at("variables").get<std::vector<Variable>>();
    b.tags = get_optional<std::vector<std::string>>(j, "tags");
    b.retry = get_optional<int>(j, "retry");
    b.extends = get_optional<std::vector<std::string>>(j, "extends").value_or(std::vector<std::string>{});
}

void to_json(json& j, const Template& t) { j = json{{"name", t.name}, {"body", t.body}}; }

void from_json(const json& j, Template& t) {
    t.name = get_field<std::string>(j, "name");
    t.body = field(j, "body").get<TemplateBody>();
}

void to_json(json& j, const JobRun& r) {
    j = json{
        {"job_name", r.job_name},
        {"status", r.status},
        {"started_at", timestamp_json(r.started_at)},
        {"finished_at", timestamp_json(r.finished_at)},
        {"duration_s", optional_json(r.duration_s)},
        {"queued_s", optional_json(r.queued_s)},
        {"failure_reason", optional_json(r.failure_reason)},
    };
}

void from_json(const json& j, JobRun& r) {
    r.job_name = get_field<std::string>(j, "job_name");
    r.status = field(j, "status").get<ExecutionStatus>();
    r.started_at = get_timestamp(j, "started_at");
    r.finished_at = get_timestamp(j, "finished_at");
    r.duration_s = get_optional<double>(j, "duration_s");
    r.queued_s = get_optional<double>(j, "queued_s");
    r.failure_reason = get_optional<std::string>(j, "failure_reason");
}

json model_to_json(const Pipeline& p) {
    return json{
        {"schema", kModelSchema},
        {"ref", p.ref},
        {"commit_sha", p.commit_sha},
        {"file_path", p.file_path},
        {"yaml_hash", p.yaml_hash},
        {"stage_order", p.stage_order},
        {"jobs", p.jobs},
        {"templates", p.templates},
        {"variables", p.variables},
        {"triggers", p.triggers},
    };
}

Pipeline model_from_json(const json& doc) {
    try {
        check_schema(doc, kModelSchema);
        Pipeline p;
        p.ref = get_field<std::string>(doc, "ref");
        p.commit_sha = get_field<std::string>(doc, "commit_sha");
        p.file_path = get_field<std::string>(doc, "file_path");
        p.yaml_hash = get_field<std::string>(doc, "yaml_hash");
        p.stage_order = get_field<std::vector<std::string>>(doc, "stage_order");
        p.jobs = field(doc, "jobs").get<std::vector<Job>>();
        p.templates = field(doc, "templates").get<std::vector<Template>>();
        p.variables = field(doc, "variables").get<std::vector<Variable>>();
        p.triggers = field(doc, "triggers").get<std::vector<Trigger>>();
        return p;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("model: ") + e.what());
    }
}

json run_to_json(const PipelineRun& r) {
    return json{
        {"schema", kRunSchema},
        {"run_id", r.run_id},
        {"pipeline_yaml_hash", r.pipeline_yaml_hash},
        {"status", r.status},
        {"started_at", timestamp_json(r.started_at)},
        {"finished_at", timestamp_json(r.finished_at)},
        {"duration_s", optional_json(r.duration_s)},
        {"source", r.source},
        {"job_runs", r.job_runs},
    };
}

PipelineRun run_from_json(const json& doc) {
    try {
        check_schema(doc, kRunSchema);
        PipelineRun r;
        r.run_id = get_field<std::string>(doc, "run_id");
        r.pipeline_yaml_hash = get_field<std::string>(doc, "pipeline_yaml_hash");
        r.status = field(doc, "status").get<ExecutionStatus>();
        r.started_at = get_timestamp(doc, "started_at");
        r.finished_at = get_timestamp(doc, "finished_at");
        r.duration_s = get_optional<double>(doc, "duration_s");
        r.source = field(doc, "source").get<TriggerType>();
        r.job_runs = field(doc, "job_runs").get<std::vector<JobRun>>();
        return r;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("run: ") + e.what());
    }
}

} // namespace pipetwin
