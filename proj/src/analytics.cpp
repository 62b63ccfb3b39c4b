#include "pipetwin/analytics.hpp"

#include "pipetwin/model_json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace pipetwin::analytics {

using nlohmann::json;

namespace {

bool finished(ExecutionStatus s) {
    return s == ExecutionStatus::success || s == ExecutionStatus::failed || s == ExecutionStatus::canceled ||
           s == ExecutionStatus::skipped;
}

bool executed(ExecutionStatus s) {
    return s == ExecutionStatus::success || s == ExecutionStatus::failed || s == ExecutionStatus::canceled;
}

double mean(const std::vector<double>& v) {
    double sum = 0;
    for (double x : v) sum += x;
    return sum / double(v.size());
}

template <typename T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

std::optional<double> opt_double(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
}

std::string number(double v) {
    char buf[64];
    if (v == std::floor(v) && std::fabs(v) < 1e15) {
        std::snprintf(buf, sizeof buf, "%.0f", v);
    } else {
        std::snprintf(buf, sizeof buf, "%.1f", v);
    }
    return buf;
}

std::string signed_fixed(double v, int decimals) {
    if (v == 0) v = 0; // drops negative zero
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.*f", decimals, v);
    return buf;
}

std::size_t display_width(const std::string& s) {
    return std::size_t(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

std::string pad(const std::string& s, std::size_t width) {
    const auto w = display_width(s);
    return w >= width ? s + " " : s + std::string(width - w, ' ');
}

json delta_json(const MetricDelta& d) {
    return json{{"before", opt(d.before)},
                {"after", opt(d.after)},
                {"delta", opt(d.delta)},
                {"unit", std::string(to_string(d.unit))},
                {"display", format_delta(d)}};
}

} // namespace

std::string_view to_string(FailureCategory c) {
    switch (c) {
    case FailureCategory::infrastructure: return "infrastructure";
    case FailureCategory::script: return "script";
    case FailureCategory::other: return "other";
    }
    return "other";
}

std::string_view to_string(DeltaUnit u) {
    switch (u) {
    case DeltaUnit::count: return "count";
    case DeltaUnit::percentage_points: return "pp";
    case DeltaUnit::percent: return "percent";
    case DeltaUnit::none: return "none";
    }
    return "none";
}

double round_ratio_1dp(long long num, long long den) {
    if (den == 0) throw Error("round_ratio_1dp: zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    const bool negative = num < 0;
    const long long n = (negative ? -num : num) * 10;
    long long q = n / den;
    const long long r = n % den;
    if (2 * r > den || (2 * r == den && q % 2 == 1)) ++q;
    return (negative ? -double(q) : double(q)) / 10.0;
}

double round_1dp(double v) { return std::nearbyint(v * 10.0) / 10.0; }

double median(std::vector<double> values) {
    if (values.empty()) throw Error("median of an empty list");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

FailureCategory categorize(const JobRun& r) {
    if (r.status != ExecutionStatus::failed)
        throw NotAFailure("job '" + r.job_name + "' has status " + std::string(to_string(r.status)));
    static const std::set<std::string> infrastructure = {
        "runner_system_failure",  "stuck_or_timeout_failure", "api_failure",
        "scheduler_failure",      "data_integrity_failure",   "runner_unsupported",
    };
    if (!r.failure_reason) return FailureCategory::other;
    if (*r.failure_reason == "script_failure") return FailureCategory::script;
    if (infrastructure.count(*r.failure_reason)) return FailureCategory::infrastructure;
    return FailureCategory::other;
}

VersionMetrics aggregate(std::span<const PipelineRun> runs, const Pipeline& model) {
    VersionMetrics m;
    m.yaml_hash = runs.empty() ? model.yaml_hash : runs.front().pipeline_yaml_hash;
    m.runs = int(runs.size());
    m.job_count = int(model.jobs.size());
    for (auto c : kAllFailureCategories) m.failure_categories[c] = 0;

    std::map<std::string, std::string> stage_of;
    for (const auto& j : model.jobs) stage_of[j.name] = j.stage;

    long long successes = 0;
    std::vector<double> durations;
    std::vector<double> queues;
    std::map<std::string, std::vector<double>> stage_durations;

    for (const auto& run : runs) {
        if (run.pipeline_yaml_hash != m.yaml_hash)
            throw Error("aggregate: runs belong to different versions (" + m.yaml_hash + ", " +
                        run.pipeline_yaml_hash + ")");
        if (run.status == ExecutionStatus::success) ++successes;
        if (finished(run.status) && run.duration_s) durations.push_back(*run.duration_s);

        for (const auto& jr : run.job_runs) {
            if (jr.queued_s) queues.push_back(*jr.queued_s);
            if (jr.status == ExecutionStatus::failed) ++m.failure_categories[categorize(jr)];
            auto st = stage_of.find(jr.job_name);
            if (st != stage_of.end() && executed(jr.status) && jr.duration_s)
                stage_durations[st->second].push_back(*jr.duration_s);
        }
    }

    if (runs.empty()) return m;
    m.success_rate_pct = round_ratio_1dp(100 * successes, m.runs);
    if (!durations.empty()) {
        m.avg_duration_s = round_1dp(mean(durations));
        m.median_duration_s = round_1dp(median(durations));
    }
    for (const auto& [stage, v] : stage_durations) m.stage_avg_s[stage] = round_1dp(mean(v));
    if (!queues.empty()) m.avg_queue_s = round_1dp(mean(queues));
    return m;
}

MetricDelta metric_delta(std::optional<double> before, std::optional<double> after, DeltaUnit unit) {
    MetricDelta d{before, after, std::nullopt, unit};
    if (!before || !after) return d;
    switch (unit) {
    case DeltaUnit::count: d.delta = *after - *before; break;
    case DeltaUnit::percentage_points: d.delta = round_1dp(*after - *before); break;
    case DeltaUnit::percent:
        if (*before != 0) d.delta = round_1dp(100.0 * (*after / *before - 1.0));
        break;
    case DeltaUnit::none: break;
    }
    return d;
}

MetricsDelta delta(const VersionMetrics& m1, const VersionMetrics& m2) {
    auto as_double = [](std::optional<int> v) { return v ? std::optional<double>(*v) : std::nullopt; };
    MetricsDelta d;
    d.from_hash = m1.yaml_hash;
    d.to_hash = m2.yaml_hash;
    d.jobs = metric_delta(as_double(m1.job_count), as_double(m2.job_count), DeltaUnit::count);
    d.runs = metric_delta(double(m1.runs), double(m2.runs), DeltaUnit::none);
    d.success_rate = metric_delta(m1.success_rate_pct, m2.success_rate_pct, DeltaUnit::percentage_points);
    d.avg_duration = metric_delta(m1.avg_duration_s, m2.avg_duration_s, DeltaUnit::percent);
    d.median_duration = metric_delta(m1.median_duration_s, m2.median_duration_s, DeltaUnit::percent);
    std::set<std::string> stages;
    for (const auto& [s, _] : m1.stage_avg_s) stages.insert(s);
    for (const auto& [s, _] : m2.stage_avg_s) stages.insert(s);
    auto lookup = [](const std::map<std::string, double>& m, const std::string& k) {
        auto it = m.find(k);
        return it == m.end() ? std::nullopt : std::optional<double>(it->second);
    };
    for (const auto& s : stages)
        d.stage_avg[s] = metric_delta(lookup(m1.stage_avg_s, s), lookup(m2.stage_avg_s, s), DeltaUnit::percent);
    d.avg_queue = metric_delta(m1.avg_queue_s, m2.avg_queue_s, DeltaUnit::percent);
    return d;
}

ExecutionOverlay overlay(const PipelineRun& run, const bpmn::BpmnDocument& doc) {
    ExecutionOverlay o;
    o.run_id = run.run_id;
    for (const auto& [job, id] : doc.element_index) o.elements[id] = OverlayEntry{};
    for (const auto& jr : run.job_runs) {
        auto it = doc.element_index.find(jr.job_name);
        if (it == doc.element_index.end()) throw bpmn::MissingElement(jr.job_name);
        o.elements[it->second] = {jr.status, jr.duration_s, jr.failure_reason};
    }
    return o;
}

json to_json(const VersionMetrics& m) {
    json stages = json::object();
    for (const auto& [s, v] : m.stage_avg_s) stages[s] = v;
    json categories = json::object();
    for (const auto& [c, n] : m.failure_categories) categories[std::string(to_string(c))] = n;
    return json{
        {"schema", kMetricsSchema},
        {"yaml_hash", m.yaml_hash},
        {"runs", m.runs},
        {"job_count", opt(m.job_count)},
        {"success_rate_pct", opt(m.success_rate_pct)},
        {"avg_duration_s", opt(m.avg_duration_s)},
        {"median_duration_s", opt(m.median_duration_s)},
        {"stage_avg_s", stages},
        {"avg_queue_s", opt(m.avg_queue_s)},
        {"failure_categories", categories},
    };
}

VersionMetrics metrics_from_json(const json& doc) {
    if (!doc.is_object() || doc.value("schema", "") != kMetricsSchema)
        throw SchemaError("metrics: wrong or missing schema");
    try {
        VersionMetrics m;
        m.yaml_hash = doc.at("yaml_hash").get<std::string>();
        m.runs = doc.at("runs").get<int>();
        if (!doc.at("job_count").is_null()) m.job_count = doc.at("job_count").get<int>();
        m.success_rate_pct = opt_double(doc, "success_rate_pct");
        m.avg_duration_s = opt_double(doc, "avg_duration_s");
        m.median_duration_s = opt_double(doc, "median_duration_s");
        m.stage_avg_s = doc.at("stage_avg_s").get<std::map<std::string, double>>();
        m.avg_queue_s = opt_double(doc, "avg_queue_s");
        const auto& cats = doc.at("failure_categories");
        for (auto c : kAllFailureCategories) m.failure_categories[c] = cats.at(std::string(to_string(c))).get<int>();
        return m;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("metrics: ") + e.what());
    }
}

json to_json(const MetricsDelta& d) {
    json stages = json::object();
    for (const auto& [s, v] : d.stage_avg) stages[s] = delta_json(v);
    return json{
        {"schema", kMetricsDeltaSchema},
        {"from_hash", d.from_hash},
        {"to_hash", d.to_hash},
        {"jobs", delta_json(d.jobs)},
        {"runs", delta_json(d.runs)},
        {"success_rate_pct", delta_json(d.success_rate)},
        {"avg_duration_s", delta_json(d.avg_duration)},
        {"median_duration_s", delta_json(d.median_duration)},
        {"stage_avg_s", stages},
        {"avg_queue_s", delta_json(d.avg_queue)},
    };
}

json to_json(const ExecutionOverlay& o) {
    json elements = json::object();
    for (const auto& [id, e] : o.elements) {
        elements[id] = {{"status", std::string(to_string(e.status))},
                        {"duration_s", opt(e.duration_s)},
                        {"failure_reason", opt(e.failure_reason)}};
    }
    return json{{"schema", kOverlaySchema}, {"run_id", o.run_id}, {"elements", elements}};
}

std::string format_delta(const MetricDelta& d) {
    if (!d.delta) return "–";
    const double v = *d.delta;
    switch (d.unit) {
    case DeltaUnit::count: return signed_fixed(v, 0);
    case DeltaUnit::percentage_points: return signed_fixed(v, 1) + " pp";
    case DeltaUnit::percent: return signed_fixed(std::fabs(v) >= 1000 ? std::nearbyint(v) : v,
                                                 std::fabs(v) >= 1000 ? 0 : 1) + "%";
    case DeltaUnit::none: break;
    }
    return "–";
}

std::string format_table(const MetricsDelta& d, const std::vector<std::string>& stage_order) {
    struct Row {
        std::string label;
        const MetricDelta* m;
        bool one_decimal;
    };
    std::vector<Row> rows = {
        {"Jobs count", &d.jobs, false},
        {"Pipeline runs", &d.runs, false},
        {"Success rate (%)", &d.success_rate, true},
        {"Avg. duration (s)", &d.avg_duration, false},
        {"Median duration (s)", &d.median_duration, false},
    };
    std::vector<std::string> stages;
    for (const auto& s : stage_order) {
        if (d.stage_avg.count(s)) stages.push_back(s);
    }
    for (const auto& [s, _] : d.stage_avg) {
        if (std::find(stages.begin(), stages.end(), s) == stages.end()) stages.push_back(s);
    }
    for (const auto& s : stages) {
        auto label = s;
        if (!label.empty() && label[0] >= 'a' && label[0] <= 'z') label[0] = char(label[0] - 'a' + 'A');
        rows.push_back({label + " stage avg. (s)", &d.stage_avg.at(s), false});
    }
    rows.push_back({"Avg. queue time (s)", &d.avg_queue, false});

    auto value = [](const std::optional<double>& v, bool one_decimal) {
        if (!v) return std::string("–");
        if (one_decimal) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.1f", *v);
            return std::string(buf);
        }
        return number(*v);
    };

    std::size_t label_width = 8;
    for (const auto& r : rows) label_width = std::max(label_width, display_width(r.label) + 2);
    std::string out = pad("Metric", label_width) + pad("V1", 10) + pad("V2", 10) + "Δ\n";
    for (const auto& r : rows) {
        out += pad(r.label, label_width) + pad(value(r.m->before, r.one_decimal), 10) +
               pad(value(r.m->after, r.one_decimal), 10) + format_delta(*r.m) + "\n";
    }
    return out;
}

} // namespace pipetwin::analytics
