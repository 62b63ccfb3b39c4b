#pragma once

// Structural comparison of two pipeline versions and its projection onto the
// two BPMN documents.

#include "pipetwin/bpmn.hpp"
#include "pipetwin/model.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace pipetwin::diff {

inline constexpr std::string_view kDiffSchema = "pipetwin.diff/1";

/// Job attributes compared field by field, in report order.
inline constexpr std::array<std::string_view, 10> kJobFields = {
    "stage", "image", "needs", "conditions", "when", "script", "variables", "allow_failure", "tags", "retry",
};

/// Template bodies add `extends`.
inline constexpr std::array<std::string_view, 11> kTemplateFields = {
    "stage",  "image",     "needs",         "conditions", "when",  "script",
    "variables", "allow_failure", "tags", "retry", "extends",
};

/// `before` and `after` are canonical model JSON; null for an absent
/// optional.
struct FieldChange {
    std::string field;
    nlohmann::json before;
    nlohmann::json after;

    bool operator==(const FieldChange&) const = default;
};

struct JobDelta {
    std::string name;
    std::vector<FieldChange> field_changes;

    bool operator==(const JobDelta&) const = default;
};

using TemplateDelta = JobDelta;

struct VariableModification {
    std::string key;
    std::string before;
    std::string after;

    bool operator==(const VariableModification&) const = default;
};

struct VariableChanges {
    std::vector<Variable> added;
    std::vector<Variable> removed;
    std::vector<VariableModification> modified;

    bool operator==(const VariableChanges&) const = default;
    bool empty() const { return added.empty() && removed.empty() && modified.empty(); }
};

struct TriggerChanges {
    std::vector<TriggerType> added;
    std::vector<TriggerType> removed;

    bool operator==(const TriggerChanges&) const = default;
    bool empty() const { return added.empty() && removed.empty(); }
};

struct CountDeltas {
    int stages_before = 0;
    int stages_after = 0;
    int stages_delta = 0;
    int jobs_before = 0;
    int jobs_after = 0;
    int jobs_delta = 0;

    bool operator==(const CountDeltas&) const = default;
};

struct StructuralDiff {
    std::vector<std::string> added_jobs;
    std::vector<std::string> removed_jobs;
    std::vector<JobDelta> modified_jobs;
    std::vector<std::string> added_templates;
    std::vector<std::string> removed_templates;
    std::vector<TemplateDelta> modified_templates;
    std::vector<std::string> added_stages;
    std::vector<std::string> removed_stages;
    VariableChanges variable_changes;
    TriggerChanges trigger_changes;
    CountDeltas summary;

    bool operator==(const StructuralDiff&) const = default;

    /// True when nothing but the (zero) count deltas is present.
    bool empty() const;
};

/// Field changes between two jobs with the same name. needs and tags compare
/// as sets, variables by key, everything else by value.
std::vector<FieldChange> compare_jobs(const Job& before, const Job& after);
std::vector<FieldChange> compare_templates(const TemplateBody& before, const TemplateBody& after);

StructuralDiff diff(const Pipeline& v1, const Pipeline& v2);

enum class ChangeKind { added, removed, modified };

std::string_view to_string(ChangeKind kind);

struct DiffOverlay {
    std::map<std::string, ChangeKind> elements;

    bool operator==(const DiffOverlay&) const = default;
};

/// First overlay annotates b1 (removed, modified), second annotates b2
/// (added, modified). Throws bpmn::MissingElement on a job the document does
/// not index.
std::pair<DiffOverlay, DiffOverlay> project(const StructuralDiff& d, const bpmn::BpmnDocument& b1,
                                            const bpmn::BpmnDocument& b2);

nlohmann::json to_json(const StructuralDiff& d);
StructuralDiff diff_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const DiffOverlay& overlay);

/// Counts first ("jobs 15 → 17 (+2)", "2 added, 0 removed, 1 modified"),
/// then one line per change prefixed '+', '-' or '~'.
std::string format_summary(const StructuralDiff& d);

} // namespace pipetwin::diff
