#include "pipetwin/bpmn.hpp"

#include <sstream>

namespace pipetwin::bpmn {

namespace {

constexpr const char* kBpmnNs = "http://www.omg.org/spec/BPMN/20100524/MODEL";
constexpr const char* kBpmnDiNs = "http://www.omg.org/spec/BPMN/20100524/DI";
constexpr const char* kDcNs = "http://www.omg.org/spec/DD/20100524/DC";
constexpr const char* kDiNs = "http://www.omg.org/spec/DD/20100524/DI";
constexpr const char* kTargetNs = "urn:pipetwin:pipeline";

std::string escape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char ch : s) {
        switch (ch) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\r': out += "&#13;"; break;
        default: out += ch;
        }
    }
    return out;
}

class XmlWriter {
public:
    using Attrs = std::vector<std::pair<std::string, std::string>>;

    void open(const std::string& tag, const Attrs& attrs = {}) {
        start_tag(tag, attrs);
        out_ << ">\n";
        stack_.push_back(tag);
    }

    void empty(const std::string& tag, const Attrs& attrs = {}) {
        start_tag(tag, attrs);
        out_ << "/>\n";
    }

    void text(const std::string& tag, std::string_view body, const Attrs& attrs = {}) {
        start_tag(tag, attrs);
        out_ << '>' << escape(body) << "</" << tag << ">\n";
    }

    void close() {
        indent(stack_.size() - 1);
        out_ << "</" << stack_.back() << ">\n";
        stack_.pop_back();
    }

    std::string str() const { return out_.str(); }

private:
    void indent(std::size_t depth) {
        for (std::size_t i = 0; i < depth; ++i) out_ << "  ";
    }

    void start_tag(const std::string& tag, const Attrs& attrs) {
        indent(stack_.size());
        out_ << '<' << tag;
        for (const auto& [k, v] : attrs) out_ << ' ' << k << "=\"" << escape(v) << '"';
    }

    std::ostringstream out_;
    std::vector<std::string> stack_;
};

const char* element_tag(NodeKind kind) {
    switch (kind) {
    case NodeKind::start_event: return "bpmn:startEvent";
    case NodeKind::end_event: return "bpmn:endEvent";
    case NodeKind::task: return "bpmn:task";
    case NodeKind::user_task: return "bpmn:userTask";
    case NodeKind::parallel_gateway: return "bpmn:parallelGateway";
    case NodeKind::exclusive_gateway: return "bpmn:exclusiveGateway";
    }
    return "bpmn:task";
}

std::string event_ref(const FlowNode& n) {
    const std::string t(to_string(*n.trigger));
    return n.event_kind == EventKind::signal ? "signal_" + t : "message_" + t;
}

XmlWriter::Attrs bounds_attrs(const Bounds& b) {
    return {{"x", std::to_string(b.x)},
            {"y", std::to_string(b.y)},
            {"width", std::to_string(b.width)},
            {"height", std::to_string(b.height)}};
}

} // namespace

std::string serialize(const ProcessModel& model, const LayoutPlan& plan) {
    XmlWriter w;

    std::map<std::string, std::vector<std::string>> incoming;
    std::map<std::string, std::vector<std::string>> outgoing;
    for (const auto& f : model.flows) {
        outgoing[f.source].push_back(f.id);
        incoming[f.target].push_back(f.id);
    }

    w.open("bpmn:definitions", {{"xmlns:bpmn", kBpmnNs},
                                {"xmlns:bpmndi", kBpmnDiNs},
                                {"xmlns:dc", kDcNs},
                                {"xmlns:di", kDiNs},
                                {"id", "definitions_pipeline"},
                                {"targetNamespace", kTargetNs},
                                {"exporter", "pipetwin"},
                                {"exporterVersion", "1"}});

    std::set<std::string> declared;
    for (const auto& n : model.nodes) {
        if (n.kind != NodeKind::start_event || n.event_kind == EventKind::none || !n.trigger) continue;
        const auto ref = event_ref(n);
        if (!declared.insert(ref).second) continue;
        const char* tag = n.event_kind == EventKind::signal ? "bpmn:signal" : "bpmn:message";
        w.empty(tag, {{"id", ref}, {"name", std::string(to_string(*n.trigger))}});
    }

    w.open("bpmn:process", {{"id", "process_pipeline"}, {"isExecutable", "false"}});
    if (!model.lanes.empty()) {
        w.open("bpmn:laneSet", {{"id", "laneset_stages"}});
        for (const auto& lane : model.lanes) {
            w.open("bpmn:lane", {{"id", lane.id}, {"name", lane.stage}});
            for (const auto& id : lane.node_ids) w.text("bpmn:flowNodeRef", id);
            w.close();
        }
        w.close();
    }

    for (const auto& n : model.nodes) {
        XmlWriter::Attrs attrs{{"id", n.id}};
        if (!n.name.empty()) attrs.emplace_back("name", n.name);
        if (n.kind == NodeKind::parallel_gateway || n.kind == NodeKind::exclusive_gateway)
            attrs.emplace_back("gatewayDirection", n.diverging ? "Diverging" : "Converging");
        w.open(element_tag(n.kind), attrs);
        for (const auto& d : n.documentation) w.text("bpmn:documentation", d);
        for (const auto& f : incoming[n.id]) w.text("bpmn:incoming", f);
        for (const auto& f : outgoing[n.id]) w.text("bpmn:outgoing", f);
        if (n.kind == NodeKind::start_event && n.event_kind == EventKind::signal) {
            w.empty("bpmn:signalEventDefinition", {{"id", n.id + "_definition"}, {"signalRef", event_ref(n)}});
        } else if (n.kind == NodeKind::start_event && n.event_kind == EventKind::message) {
            w.empty("bpmn:messageEventDefinition", {{"id", n.id + "_definition"}, {"messageRef", event_ref(n)}});
        }
        w.close();
    }
    for (const auto& f : model.flows) {
        w.empty("bpmn:sequenceFlow", {{"id", f.id}, {"sourceRef", f.source}, {"targetRef", f.target}});
    }
    w.close();

    w.open("bpmndi:BPMNDiagram", {{"id", "diagram_pipeline"}});
    w.open("bpmndi:BPMNPlane", {{"id", "plane_pipeline"}, {"bpmnElement", "process_pipeline"}});
    for (const auto& lane : model.lanes) {
        w.open("bpmndi:BPMNShape", {{"id", lane.id + "_di"}, {"bpmnElement", lane.id}, {"isHorizontal", "false"}});
        w.empty("dc:Bounds", bounds_attrs(plan.lane_bounds.at(lane.id)));
        w.close();
    }
    for (const auto& n : model.nodes) {
        w.open("bpmndi:BPMNShape", {{"id", n.id + "_di"}, {"bpmnElement", n.id}});
        w.empty("dc:Bounds", bounds_attrs(plan.node_positions.at(n.id)));
        w.close();
    }
    for (const auto& f : model.flows) {
        w.open("bpmndi:BPMNEdge", {{"id", f.id + "_di"}, {"bpmnElement", f.id}});
        for (const auto& p : plan.edge_waypoints.at(f.id))
            w.empty("di:waypoint", {{"x", std::to_string(p.x)}, {"y", std::to_string(p.y)}});
        w.close();
    }
    w.close();
    w.close();
    w.close();

    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n" + w.str();
}

} // namespace pipetwin::bpmn
