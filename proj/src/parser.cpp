#include "pipetwin/parser.hpp"

#include <algorithm>
#include <array>
#include <regex>
#include <set>

namespace pipetwin {

namespace {

constexpr std::array<std::string_view, 10> kReservedKeys = {
    "default", "variables", "workflow", "stages",        "image",
    "services", "include",  "cache",    "before_script", "after_script",
};

const std::vector<std::string> kImplicitStages = {"build", "test", "deploy"};
constexpr std::string_view kDefaultStage = "test";

[[noreturn]] void fail(ParseErrorKind kind, const std::string& msg) { throw ParseError(kind, msg); }

std::string scalar(const RawNode& node, const std::string& where) {
    if (!node.IsScalar()) fail(ParseErrorKind::invalid_field, where + " must be a scalar");
    return node.Scalar();
}

std::vector<std::string> string_list(const RawNode& node, const std::string& where) {
    std::vector<std::string> out;
    if (!node || node.IsNull()) return out;
    if (node.IsScalar()) {
        out.push_back(node.Scalar());
        return out;
    }
    if (!node.IsSequence()) fail(ParseErrorKind::invalid_field, where + " must be a string or list");
    for (const auto& item : node) {
        // One level of nesting is flattened, as the platform does for scripts.
        if (item.IsSequence()) {
            for (const auto& inner : item) out.push_back(scalar(inner, where));
        } else {
            out.push_back(scalar(item, where));
        }
    }
    return out;
}

RawNode as_mapping(const RawNode& node, const std::string& where) {
    if (!node || node.IsNull()) return RawNode(YAML::NodeType::Map);
    if (!node.IsMap()) fail(ParseErrorKind::not_a_mapping, where + " must be a mapping");
    return node;
}

/// Expands `<<` merge keys; explicit keys win over merged ones.
RawNode expand_merge_keys(const RawNode& node) {
    if (node.IsSequence()) {
        RawNode out(YAML::NodeType::Sequence);
        for (const auto& item : node) out.push_back(expand_merge_keys(item));
        return out;
    }
    if (!node.IsMap()) return YAML::Clone(node);

    RawNode out(YAML::NodeType::Map);
    std::vector<RawNode> merged_sources;
    for (const auto& kv : node) {
        const auto key = kv.first.Scalar();
        if (key == "<<") {
            if (kv.second.IsSequence()) {
                for (const auto& src : kv.second) merged_sources.push_back(src);
            } else {
                merged_sources.push_back(kv.second);
            }
            continue;
        }
        out[key] = expand_merge_keys(kv.second);
    }
    for (const auto& src : merged_sources) {
        if (!src.IsMap()) continue;
        for (const auto& kv : src) {
            const auto key = kv.first.Scalar();
            if (!out[key]) out[key] = expand_merge_keys(kv.second);
        }
    }
    return out;
}

void deep_merge(RawNode& dest, const RawNode& src) {
    for (const auto& kv : src) {
        const auto key = kv.first.Scalar();
        RawNode existing = dest[key];
        if (existing && existing.IsMap() && kv.second.IsMap()) {
            deep_merge(existing, kv.second);
        } else {
            dest[key] = YAML::Clone(kv.second);
        }
    }
}

std::vector<std::string> extends_list(const RawNode& node) {
    const auto ext = node["extends"];
    if (!ext) return {};
    return string_list(ext, "extends");
}

RawNode resolve_chain(const RawNode& node, const std::map<std::string, RawNode>& templates,
                      std::vector<std::string>& chain, int depth) {
    RawNode result(YAML::NodeType::Map);
    for (const auto& name : extends_list(node)) {
        if (std::find(chain.begin(), chain.end(), name) != chain.end()) {
            std::string path;
            for (const auto& c : chain) path += c + " -> ";
            fail(ParseErrorKind::extends_cycle, "extends cycle: " + path + name);
        }
        if (depth + 1 > kMaxExtendsDepth)
            fail(ParseErrorKind::max_depth_exceeded,
                 "extends chain deeper than " + std::to_string(kMaxExtendsDepth) + " at '" + name + "'");
        auto it = templates.find(name);
        if (it == templates.end()) fail(ParseErrorKind::unknown_template, "unknown template '" + name + "'");

        chain.push_back(name);
        auto base = resolve_chain(as_mapping(it->second, "template '" + name + "'"), templates, chain,
                                  depth + 1);
        chain.pop_back();
        deep_merge(result, base);
    }
    for (const auto& kv : node) {
        if (kv.first.Scalar() == "extends") continue;
        RawNode single(YAML::NodeType::Map);
        single[kv.first.Scalar()] = kv.second;
        deep_merge(result, single);
    }
    return result;
}

std::vector<Variable> parse_variables(const RawNode& node, VariableScope scope, const std::string& owner) {
    std::vector<Variable> out;
    if (!node || node.IsNull()) return out;
    if (!node.IsMap()) fail(ParseErrorKind::invalid_field, "variables of " + owner + " must be a mapping");
    for (const auto& kv : node) {
        Variable v;
        v.key = kv.first.Scalar();
        v.scope = scope;
        if (kv.second.IsMap()) {
            v.value = kv.second["value"] ? scalar(kv.second["value"], "variable " + v.key) : "";
        } else if (kv.second.IsNull()) {
            v.value = "";
        } else {
            v.value = scalar(kv.second, "variable " + v.key);
        }
        out.push_back(std::move(v));
    }
    std::stable_sort(out.begin(), out.end(), [](const Variable& a, const Variable& b) { return a.key < b.key; });
    return out;
}

std::vector<std::string> path_patterns(const RawNode& node, const std::string& where) {
    if (node.IsMap()) return string_list(node["paths"], where);
    return string_list(node, where);
}

std::string flow_yaml(const RawNode& node) {
    YAML::Emitter em;
    em << YAML::Flow << node;
    return em.c_str();
}

std::vector<Condition> parse_conditions(const RawNode& job, const std::string& name) {
    std::vector<Condition> out;
    if (const auto rules = job["rules"]; rules && !rules.IsNull()) {
        if (!rules.IsSequence()) fail(ParseErrorKind::invalid_field, "rules of '" + name + "' must be a list");
        for (const auto& rule : rules) {
            if (!rule.IsMap()) continue;
            if (rule["if"]) out.push_back({ConditionKind::if_expr, scalar(rule["if"], "rules:if")});
            if (rule["changes"])
                out.push_back({ConditionKind::changes, path_patterns(rule["changes"], "rules:changes")});
            if (rule["exists"])
                out.push_back({ConditionKind::exists, path_patterns(rule["exists"], "rules:exists")});
        }
    }
    for (const char* legacy : {"only", "except"}) {
        if (const auto n = job[legacy]; n && !n.IsNull())
            out.push_back({ConditionKind::if_expr, std::string(legacy) + ": " + flow_yaml(n)});
    }
    return out;
}

std::optional<int> parse_retry(const RawNode& node, const std::string& where) {
    if (!node || node.IsNull()) return std::nullopt;
    const RawNode value = node.IsMap() ? node["max"] : node;
    if (!value) return std::nullopt;
    try {
        return value.as<int>();
    } catch (const YAML::Exception&) {
        fail(ParseErrorKind::invalid_field, where + ": retry must be an integer");
    }
}

std::optional<std::string> parse_image(const RawNode& node) {
    if (!node || node.IsNull()) return std::nullopt;
    if (node.IsMap()) {
        if (!node["name"]) return std::nullopt;
        return scalar(node["name"], "image:name");
    }
    return scalar(node, "image");
}

WhenPolicy parse_when(const RawNode& node, const std::string& where) {
    const auto text = scalar(node, where + ": when");
    auto w = parse_when_policy(text);
    if (!w) fail(ParseErrorKind::unknown_when_policy, where + ": unknown when policy '" + text + "'");
    return *w;
}

bool parse_allow_failure(const RawNode& node) {
    if (!node || node.IsNull()) return false;
    if (node.IsMap()) return true; // exit_codes form
    try {
        return node.as<bool>();
    } catch (const YAML::Exception&) {
        fail(ParseErrorKind::invalid_field, "allow_failure must be a boolean");
    }
}

std::vector<std::string> parse_needs(const RawNode& node, const std::string& where) {
    std::vector<std::string> out;
    if (!node || node.IsNull()) return out;
    if (!node.IsSequence()) fail(ParseErrorKind::invalid_field, where + ": needs must be a list");
    for (const auto& item : node) {
        if (item.IsMap()) {
            // Cross-project / cross-pipeline needs carry no `job` in this pipeline.
            if (item["pipeline"] || item["project"]) continue;
            if (item["job"]) out.push_back(scalar(item["job"], where + ": needs:job"));
        } else {
            out.push_back(scalar(item, where + ": needs"));
        }
    }
    return out;
}

TemplateBody parse_template_body(const RawNode& node, const std::string& name) {
    TemplateBody b;
    if (node["stage"]) b.stage = scalar(node["stage"], name + ": stage");
    if (node["script"]) b.script = string_list(node["script"], name + ": script");
    if (node["image"]) b.image = parse_image(node["image"]);
    if (node["when"]) b.when = parse_when(node["when"], name);
    if (node["allow_failure"]) b.allow_failure = parse_allow_failure(node["allow_failure"]);
    if (node["needs"]) b.needs = parse_needs(node["needs"], name);
    if (node["rules"] || node["only"] || node["except"]) b.conditions = parse_conditions(node, name);
    if (node["variables"]) b.variables = parse_variables(node["variables"], VariableScope::job, name);
    if (node["tags"]) b.tags = string_list(node["tags"], name + ": tags");
    if (node["retry"]) b.retry = parse_retry(node["retry"], name);
    b.extends = extends_list(node);
    return b;
}

Job parse_job(const std::string& name, const RawNode& node) {
    Job job;
    job.name = name;
    job.stage = node["stage"] ? scalar(node["stage"], name + ": stage") : std::string(kDefaultStage);
    job.script = string_list(node["script"], name + ": script");
    job.image = parse_image(node["image"]);
    job.when = node["when"] ? parse_when(node["when"], name) : WhenPolicy::on_success;
    job.allow_failure = parse_allow_failure(node["allow_failure"]);
    job.needs = parse_needs(node["needs"], name);
    job.conditions = parse_conditions(node, name);
    job.variables = parse_variables(node["variables"], VariableScope::job, name);
    job.tags = string_list(node["tags"], name + ": tags");
    job.retry = parse_retry(node["retry"], name);
    return job;
}

void apply_defaults(RawNode& job, const RawNode& defaults, const RawNode& legacy_image) {
    for (const char* key : {"image", "tags", "retry"}) {
        if (job[key]) continue;
        if (defaults[key]) {
            job[key] = YAML::Clone(defaults[key]);
        } else if (std::string_view(key) == "image" && legacy_image && !legacy_image.IsNull()) {
            job[key] = YAML::Clone(legacy_image);
        }
    }
}

std::vector<std::string> merge_stage_order(const RawNode& stages_node, const std::vector<Job>& jobs) {
    std::vector<std::string> declared;
    const bool explicit_stages = stages_node && !stages_node.IsNull();
    if (explicit_stages) {
        declared = string_list(stages_node, "stages");
    } else {
        // Implicit platform stages, kept only when some job lands in them.
        for (const auto& s : kImplicitStages) {
            if (std::any_of(jobs.begin(), jobs.end(), [&](const Job& j) { return j.stage == s; }))
                declared.push_back(s);
        }
    }

    std::vector<std::string> order;
    bool uses_pre = false, uses_post = false;
    for (const auto& j : jobs) {
        uses_pre |= j.stage == ".pre";
        uses_post |= j.stage == ".post";
    }
    if (uses_pre) order.push_back(".pre");
    for (const auto& s : declared) {
        if (s == ".pre" || s == ".post") continue;
        order.push_back(s);
    }
    for (const auto& j : jobs) {
        if (j.stage == ".pre" || j.stage == ".post") continue;
        if (std::find(order.begin(), order.end(), j.stage) == order.end()) order.push_back(j.stage);
    }
    if (uses_post) order.push_back(".post");
    return order;
}

const std::regex& pipeline_source_pattern() {
    static const std::regex re(R"re(^\s*\$CI_PIPELINE_SOURCE\s*==\s*["']([A-Za-z_]+)["']\s*$)re");
    return re;
}

const std::regex& commit_tag_pattern() {
    static const std::regex re(R"re(^\s*\$CI_COMMIT_TAG(\s*!=\s*(null|""|''))?\s*$)re");
    return re;
}

std::optional<TriggerType> source_to_trigger(const std::string& src) {
    if (src == "push") return TriggerType::push;
    if (src == "merge_request_event") return TriggerType::merge_request;
    if (src == "schedule") return TriggerType::schedule;
    if (src == "api" || src == "trigger") return TriggerType::api;
    if (src == "web") return TriggerType::web;
    return std::nullopt;
}

} // namespace

std::string_view to_string(ParseErrorKind kind) {
    switch (kind) {
    case ParseErrorKind::yaml_syntax: return "YamlSyntax";
    case ParseErrorKind::not_a_mapping: return "NotAMapping";
    case ParseErrorKind::validation_failed: return "ValidationFailed";
    case ParseErrorKind::extends_cycle: return "ExtendsCycle";
    case ParseErrorKind::unknown_when_policy: return "UnknownWhenPolicy";
    case ParseErrorKind::unknown_template: return "UnknownTemplate";
    case ParseErrorKind::max_depth_exceeded: return "MaxDepthExceeded";
    case ParseErrorKind::invalid_field: return "InvalidField";
    }
    return "?";
}

ParseError::ParseError(ParseErrorKind kind, const std::string& message, std::vector<Violation> violations)
    : Error(std::string(to_string(kind)) + ": " + message), kind_(kind), violations_(std::move(violations)) {}

bool is_reserved_key(std::string_view key) {
    return std::find(kReservedKeys.begin(), kReservedKeys.end(), key) != kReservedKeys.end();
}

SectionSplit split_sections(const RawNode& root) {
    if (!root || !root.IsMap()) fail(ParseErrorKind::not_a_mapping, "top level must be a mapping");
    SectionSplit split;
    for (const auto& kv : root) {
        if (!kv.first.IsScalar()) fail(ParseErrorKind::invalid_field, "top-level keys must be scalars");
        const auto key = kv.first.Scalar();
        if (is_reserved_key(key)) {
            split.reserved[key] = kv.second;
        } else if (!key.empty() && key.front() == '.') {
            if (!split.templates.count(key)) split.template_order.push_back(key);
            split.templates[key] = kv.second;
        } else {
            if (!split.job_nodes.count(key)) split.job_order.push_back(key);
            split.job_nodes[key] = kv.second;
        }
    }
    return split;
}

RawNode resolve_extends(const RawNode& job_node, const std::map<std::string, RawNode>& templates) {
    std::vector<std::string> chain;
    return resolve_chain(as_mapping(job_node, "job"), templates, chain, 0);
}

std::vector<Trigger> extract_triggers(const RawNode& workflow, std::vector<std::string>* warnings) {
    std::vector<Trigger> out;
    auto warn = [&](const std::string& w) {
        if (warnings) warnings->push_back(w);
    };
    if (!workflow || workflow.IsNull()) return out;
    if (!workflow.IsMap()) {
        warn("workflow is not a mapping; no triggers extracted");
        return out;
    }
    const auto rules = workflow["rules"];
    if (!rules || !rules.IsSequence()) return out;

    auto add = [&](TriggerType t) {
        if (std::none_of(out.begin(), out.end(), [&](const Trigger& x) { return x.trigger_type == t; }))
            out.push_back({t});
    };

    for (const auto& rule : rules) {
        if (!rule.IsMap() || !rule["if"] || !rule["if"].IsScalar()) {
            warn("workflow rule without an if expression contributes no trigger");
            continue;
        }
        const auto expr = rule["if"].Scalar();
        if (rule["when"] && rule["when"].IsScalar() && rule["when"].Scalar() == "never") {
            warn("workflow rule '" + expr + "' has when: never; no trigger");
            continue;
        }
        std::smatch m;
        if (std::regex_match(expr, m, pipeline_source_pattern())) {
            if (auto t = source_to_trigger(m[1].str())) {
                add(*t);
            } else {
                warn("pipeline source '" + m[1].str() + "' has no trigger type");
            }
        } else if (std::regex_match(expr, commit_tag_pattern())) {
            add(TriggerType::tag_push);
        } else {
            warn("workflow rule '" + expr + "' does not match a trigger pattern");
        }
    }
    return out;
}

ParseReport parse_with_report(const RawConfig& config) {
    RawNode root;
    try {
        root = YAML::Load(config.raw_bytes);
    } catch (const YAML::Exception& e) {
        fail(ParseErrorKind::yaml_syntax, e.what());
    }
    if (!root || !root.IsMap()) fail(ParseErrorKind::not_a_mapping, "top level must be a mapping");

    ParseReport report;
    try {
        root = expand_merge_keys(root);
        const auto split = split_sections(root);

        auto reserved = [&](const char* key) -> RawNode {
            auto it = split.reserved.find(key);
            return it == split.reserved.end() ? RawNode() : it->second;
        };

        if (split.reserved.count("include")) report.warnings.push_back("include: targets are not fetched");

        std::map<std::string, RawNode> lookup = split.templates;
        for (const auto& [name, node] : split.job_nodes) lookup.emplace(name, node);

        const auto defaults = as_mapping(reserved("default"), "default");
        const auto legacy_image = reserved("image");

        Pipeline& p = report.pipeline;
        p.ref = config.provenance.ref;
        p.commit_sha = config.provenance.commit_sha;
        p.file_path = config.provenance.file_path;
        p.yaml_hash = compute_yaml_hash(config.raw_bytes);

        for (const auto& name : split.template_order) {
            const auto node = as_mapping(split.templates.at(name), "template '" + name + "'");
            p.templates.push_back({name, parse_template_body(node, name)});
        }

        for (const auto& name : split.job_order) {
            const auto& node = split.job_nodes.at(name);
            if (!node.IsMap()) fail(ParseErrorKind::not_a_mapping, "job '" + name + "' must be a mapping");
            std::vector<std::string> chain{name};
            auto merged = resolve_chain(node, lookup, chain, 0);
            apply_defaults(merged, defaults, legacy_image);
            p.jobs.push_back(parse_job(name, merged));
        }

        p.stage_order = merge_stage_order(reserved("stages"), p.jobs);
        p.variables = parse_variables(reserved("variables"), VariableScope::pipeline, "pipeline");
        p.triggers = extract_triggers(reserved("workflow"), &report.warnings);
    } catch (const YAML::Exception& e) {
        fail(ParseErrorKind::invalid_field, e.what());
    }

    auto violations = validate(report.pipeline);
    if (!violations.empty()) {
        std::string msg = std::to_string(violations.size()) + " violation(s)";
        for (const auto& v : violations) msg += "; " + v.rule + " " + v.entity + ": " + v.message;
        throw ParseError(ParseErrorKind::validation_failed, msg, std::move(violations));
    }
    return report;
}

Pipeline parse(const RawConfig& config) { return parse_with_report(config).pipeline; }

} // namespace pipetwin
