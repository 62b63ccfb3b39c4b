#pragma once

// Pipeline metamodel: the definition facet (Pipeline, Stage, Job, Template,
// Variable, Condition, Trigger) and the execution facet (PipelineRun, JobRun).
// Values are plain aggregates; nothing here mutates after construction.

#include <chrono>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pipetwin {

/// Base class for every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

enum class WhenPolicy { on_success, manual, always, on_failure, delayed };
enum class TriggerType { push, merge_request, schedule, api, web, tag_push };
enum class ExecutionStatus { success, failed, canceled, skipped, running, pending, manual };
enum class ConditionKind { if_expr, changes, exists };
enum class VariableScope { pipeline, job };

std::string_view to_string(WhenPolicy v);
std::string_view to_string(TriggerType v);
std::string_view to_string(ExecutionStatus v);
std::string_view to_string(ConditionKind v);
std::string_view to_string(VariableScope v);

// Exact-match parsers. Unknown strings yield nullopt; callers decide how to
// reject them.
std::optional<WhenPolicy> parse_when_policy(std::string_view s);
std::optional<TriggerType> parse_trigger_type(std::string_view s);
std::optional<ExecutionStatus> parse_execution_status(std::string_view s);
std::optional<ConditionKind> parse_condition_kind(std::string_view s);
std::optional<VariableScope> parse_variable_scope(std::string_view s);

inline constexpr WhenPolicy kAllWhenPolicies[] = {
    WhenPolicy::on_success, WhenPolicy::manual, WhenPolicy::always,
    WhenPolicy::on_failure, WhenPolicy::delayed};
inline constexpr TriggerType kAllTriggerTypes[] = {
    TriggerType::push, TriggerType::merge_request, TriggerType::schedule,
    TriggerType::api,  TriggerType::web,           TriggerType::tag_push};
inline constexpr ExecutionStatus kAllExecutionStatuses[] = {
    ExecutionStatus::success, ExecutionStatus::failed,  ExecutionStatus::canceled,
    ExecutionStatus::skipped, ExecutionStatus::running, ExecutionStatus::pending,
    ExecutionStatus::manual};

struct Variable {
    std::string key;
    std::string value;
    VariableScope scope = VariableScope::pipeline;

    bool operator==(const Variable&) const = default;
};

/// A rule predicate. `if` carries the raw expression string; `changes` and
/// `exists` carry their path patterns.
struct Condition {
    using Payload = std::variant<std::string, std::vector<std::string>>;

    ConditionKind kind = ConditionKind::if_expr;
    Payload expression;

    bool operator==(const Condition&) const = default;
};

struct Trigger {
    TriggerType trigger_type = TriggerType::push;

    bool operator==(const Trigger&) const = default;
};

struct Job {
    std::string name;
    std::string stage;
    std::vector<std::string> script;
    std::optional<std::string> image;
    WhenPolicy when = WhenPolicy::on_success;
    bool allow_failure = false;
    std::vector<std::string> needs;
    std::vector<Condition> conditions;
    std::vector<Variable> variables;
    std::vector<std::string> tags;
    std::optional<int> retry;

    bool operator==(const Job&) const = default;
};

/// Pre-merge template attributes. Every field is optional; `extends` keeps
/// the template's own parent references.
struct TemplateBody {
    std::optional<std::string> stage;
    std::optional<std::vector<std::string>> script;
    std::optional<std::string> image;
    std::optional<WhenPolicy> when;
    std::optional<bool> allow_failure;
    std::optional<std::vector<std::string>> needs;
    std::optional<std::vector<Condition>> conditions;
    std::optional<std::vector<Variable>> variables;
    std::optional<std::vector<std::string>> tags;
    std::optional<int> retry;
    std::vector<std::string> extends;

    bool operator==(const TemplateBody&) const = default;
};

struct Template {
    std::string name;
    TemplateBody body;

    bool operator==(const Template&) const = default;
};

struct Stage {
    std::string name;
    std::size_t index = 0;

    bool operator==(const Stage&) const = default;
};

struct Pipeline {
    std::string ref;
    std::string commit_sha;
    std::string file_path;
    std::string yaml_hash;
    std::vector<std::string> stage_order;
    std::vector<Job> jobs;
    std::vector<Template> templates;
    std::vector<Variable> variables;
    std::vector<Trigger> triggers;

    bool operator==(const Pipeline&) const = default;

    const Job* find_job(std::string_view name) const;
    std::optional<std::size_t> stage_index(std::string_view stage) const;
    std::vector<Stage> stages() const;
};

struct JobRun {
    std::string job_name;
    ExecutionStatus status = ExecutionStatus::pending;
    std::optional<Timestamp> started_at;
    std::optional<Timestamp> finished_at;
    std::optional<double> duration_s;
    std::optional<double> queued_s;
    std::optional<std::string> failure_reason;

    bool operator==(const JobRun&) const = default;
};

struct PipelineRun {
    std::string run_id;
    std::string pipeline_yaml_hash;
    ExecutionStatus status = ExecutionStatus::pending;
    std::optional<Timestamp> started_at;
    std::optional<Timestamp> finished_at;
    std::optional<double> duration_s;
    TriggerType source = TriggerType::push;
    std::vector<JobRun> job_runs;

    bool operator==(const PipelineRun&) const = default;
};

/// ISO-8601 in UTC, e.g. "2025-08-01T12:00:00Z" (milliseconds appended only
/// when non-zero).
std::string format_timestamp(Timestamp t);

/// Accepts "YYYY-MM-DDTHH:MM:SS[.fff][Z|+hh:mm|-hh:mm]" and normalizes to UTC.
std::optional<Timestamp> parse_timestamp(std::string_view s);

} // namespace pipetwin
