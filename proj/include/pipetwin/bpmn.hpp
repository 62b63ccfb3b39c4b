#pragma once

// Pipeline -> BPMN 2.0 XML with diagram interchange.
//
// Generation runs in three steps that are also exposed individually:
//   build_process  pipeline -> ProcessModel (flow nodes, lanes, sequence flows)
//   layout         ProcessModel -> LayoutPlan (columns, bounds, waypoints)
//   serialize      ProcessModel + LayoutPlan -> XML text
//
// Stage k of the rendered stages sits in column k+1; column 0 holds the start
// events and the last column the end events. Element ids are derived from
// entity names, so output is byte-stable for a given model.

#include "pipetwin/model.hpp"
#include "pipetwin/validate.hpp"

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace pipetwin::bpmn {

struct LayoutConfig {
    int column_width = 220;
    int row_height = 90;
    int node_width = 100;
    int node_height = 80;
    int margin = 60;
    int min_lane_height = 120;
    int lane_padding = 30;
    int gateway_size = 50;
    int event_size = 36;
};

enum class ActivityKind { task, user_task };

/// user task for manual jobs, generic task otherwise.
ActivityKind map_activity(const Job& job);

/// Script lines joined by '\n'; this is the activity's first documentation.
std::string script_documentation(const Job& job);

struct StageGateways {
    bool fork = false;
    bool join = false;

    bool operator==(const StageGateways&) const = default;
};

struct GatewayPlan {
    std::map<std::string, StageGateways> stages;
    std::set<std::string> job_joins;
    std::set<std::string> job_splits;
};

/// Decides where parallel gateways go:
///  - a stage gets a fork when two or more of its jobs (or needs-join
///    gateways) are entered from the stage entry, and a join when two or more
///    of its jobs have no same-stage successor;
///  - a job with several needs, at least one of them same-stage, gets its own
///    join; a job with several same-stage successors gets a split;
///  - needs on earlier-stage jobs only add nothing, the stage sequence already
///    orders them.
GatewayPlan plan_gateways(const Pipeline& pipeline);

enum class EventKind { none, signal, message };

EventKind start_event_kind(TriggerType trigger);

struct StartEventSpec {
    std::optional<TriggerType> trigger;
    EventKind kind = EventKind::none;
};

struct StartEventPlan {
    std::vector<StartEventSpec> events;
    bool exclusive_merge = false;
};

StartEventPlan plan_start_events(std::span<const Trigger> triggers);

enum class NodeKind { start_event, end_event, task, user_task, parallel_gateway, exclusive_gateway };

enum class Slot { left, center, right };

/// Grid placement: column, a row range (center is the midpoint) and the
/// horizontal slot inside the column.
struct Placement {
    int column = 0;
    int row_lo = 0;
    int row_hi = 0;
    Slot slot = Slot::center;
};

struct FlowNode {
    std::string id;
    NodeKind kind = NodeKind::task;
    std::string name;
    std::optional<std::string> lane;
    std::vector<std::string> documentation;
    EventKind event_kind = EventKind::none;
    std::optional<TriggerType> trigger;
    bool diverging = false;
    Placement placement;
};

struct SequenceFlow {
    std::string id;
    std::string source;
    std::string target;
};

struct Lane {
    std::string id;
    std::string stage;
    int column = 0;
    std::vector<std::string> node_ids;
};

struct ProcessModel {
    std::vector<FlowNode> nodes;
    std::vector<SequenceFlow> flows;
    std::vector<Lane> lanes;
    std::map<std::string, std::string> element_index;
    std::map<std::string, std::string> lane_index;
    std::vector<std::string> gateway_ids;
    int column_count = 0;

    const FlowNode* find(const std::string& id) const;
};

struct Point {
    int x = 0;
    int y = 0;

    bool operator==(const Point&) const = default;
};

struct Bounds {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    bool operator==(const Bounds&) const = default;
    bool overlaps(const Bounds& o) const;
};

struct LayoutPlan {
    std::map<std::string, int> column_x;
    std::map<std::string, Bounds> lane_bounds;
    std::map<std::string, Bounds> node_positions;
    std::map<std::string, std::vector<Point>> edge_waypoints;
};

struct BpmnDocument {
    std::string xml;
    std::map<std::string, std::string> element_index;
    std::vector<std::string> gateway_ids;
    std::map<std::string, std::string> lane_index;
};

enum class GenerationErrorKind { invalid_pipeline, sanitization_collision };

class GenerationError : public Error {
public:
    GenerationError(GenerationErrorKind kind, const std::string& message,
                    std::vector<std::string> names = {}, std::vector<Violation> violations = {});

    GenerationErrorKind kind() const { return kind_; }
    /// For collisions: the distinct entity names mapping to one id.
    const std::vector<std::string>& names() const { return names_; }
    const std::vector<Violation>& violations() const { return violations_; }

private:
    GenerationErrorKind kind_;
    std::vector<std::string> names_;
    std::vector<Violation> violations_;
};

/// A job name missing from a document's element_index.
class MissingElement : public Error {
public:
    explicit MissingElement(std::string name);

    const std::string& name() const { return name_; }

private:
    std::string name_;
};

/// Characters outside [A-Za-z0-9_] become '_'.
std::string sanitize_id(std::string_view name);

ProcessModel build_process(const Pipeline& pipeline);
LayoutPlan layout(const ProcessModel& model, const LayoutConfig& config = {});
std::string serialize(const ProcessModel& model, const LayoutPlan& plan);

BpmnDocument generate(const Pipeline& pipeline, const LayoutConfig& config = {});

} // namespace pipetwin::bpmn
