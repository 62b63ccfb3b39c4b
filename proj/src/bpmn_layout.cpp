#include "pipetwin/bpmn.hpp"

#include <algorithm>

namespace pipetwin::bpmn {

bool Bounds::overlaps(const Bounds& o) const {
    return x < o.x + o.width && o.x < x + width && y < o.y + o.height && o.y < y + height;
}

namespace {

struct Size {
    int w;
    int h;
};

Size node_size(NodeKind kind, const LayoutConfig& c) {
    switch (kind) {
    case NodeKind::task:
    case NodeKind::user_task: return {c.node_width, c.node_height};
    case NodeKind::parallel_gateway:
    case NodeKind::exclusive_gateway: return {c.gateway_size, c.gateway_size};
    case NodeKind::start_event:
    case NodeKind::end_event: return {c.event_size, c.event_size};
    }
    return {c.node_width, c.node_height};
}

int mid_x(const Bounds& b) { return b.x + b.width / 2; }
int mid_y(const Bounds& b) { return b.y + b.height / 2; }

std::vector<Point> simplify(std::vector<Point> pts) {
    std::vector<Point> out;
    for (const auto& p : pts) {
        if (!out.empty() && out.back() == p) continue;
        if (out.size() >= 2) {
            const auto& a = out[out.size() - 2];
            const auto& b = out.back();
            if ((a.x == b.x && b.x == p.x) || (a.y == b.y && b.y == p.y)) out.pop_back();
        }
        out.push_back(p);
    }
    return out;
}

} // namespace

LayoutPlan layout(const ProcessModel& model, const LayoutConfig& c) {
    LayoutPlan plan;

    std::vector<int> rows(std::size_t(std::max(model.column_count, 1)), 1);
    for (const auto& n : model.nodes) {
        auto& r = rows.at(std::size_t(n.placement.column));
        r = std::max(r, n.placement.row_hi + 1);
    }
    int height = c.min_lane_height;
    for (int r : rows) height = std::max(height, r * c.row_height + c.lane_padding);

    auto column_left = [&](int col) { return c.margin + col * c.column_width; };
    auto row_center = [&](int col, int row) {
        const int offset = (height - rows[std::size_t(col)] * c.row_height) / 2;
        return c.margin + offset + row * c.row_height + c.row_height / 2;
    };

    for (const auto& lane : model.lanes) {
        plan.column_x[lane.stage] = column_left(lane.column);
        plan.lane_bounds[lane.id] = {column_left(lane.column), c.margin, c.column_width, height};
    }

    for (const auto& n : model.nodes) {
        const auto& pl = n.placement;
        const int left = column_left(pl.column);
        int cx = left + c.column_width / 2;
        if (pl.slot == Slot::left) cx = left + c.column_width * 3 / 22;
        if (pl.slot == Slot::right) cx = left + c.column_width * 19 / 22;
        const int cy = (row_center(pl.column, pl.row_lo) + row_center(pl.column, pl.row_hi)) / 2;
        const auto sz = node_size(n.kind, c);
        plan.node_positions[n.id] = {cx - sz.w / 2, cy - sz.h / 2, sz.w, sz.h};
    }

    for (const auto& f : model.flows) {
        const auto* src = model.find(f.source);
        const auto* dst = model.find(f.target);
        const auto& s = plan.node_positions.at(f.source);
        const auto& t = plan.node_positions.at(f.target);
        std::vector<Point> pts;

        if (src->placement.column != dst->placement.column) {
            const int bus = column_left(src->placement.column) + c.column_width;
            pts = {{s.x + s.width, mid_y(s)}, {bus, mid_y(s)}, {bus, mid_y(t)}, {t.x, mid_y(t)}};
        } else if (mid_y(s) == mid_y(t)) {
            if (mid_x(t) >= mid_x(s)) {
                pts = {{s.x + s.width, mid_y(s)}, {t.x, mid_y(t)}};
            } else {
                pts = {{s.x, mid_y(s)}, {t.x + t.width, mid_y(t)}};
            }
        } else {
            const bool down = mid_y(t) > mid_y(s);
            const Point exit{mid_x(s), down ? s.y + s.height : s.y};
            if (src->placement.slot == Slot::left && t.x > exit.x) {
                pts = {exit, {exit.x, mid_y(t)}, {t.x, mid_y(t)}};
            } else {
                const int col = src->placement.column;
                const int gap = down ? row_center(col, src->placement.row_hi) + c.row_height / 2
                                     : row_center(col, src->placement.row_lo) - c.row_height / 2;
                if (gap >= t.y && gap <= t.y + t.height) {
                    pts = {exit, {exit.x, gap}, {t.x > exit.x ? t.x : t.x + t.width, gap}};
                } else {
                    const Point entry{mid_x(t), down ? t.y : t.y + t.height};
                    pts = {exit, {exit.x, gap}, {entry.x, gap}, entry};
                }
            }
        }
        plan.edge_waypoints[f.id] = simplify(std::move(pts));
    }
    return plan;
}

} // namespace pipetwin::bpmn
