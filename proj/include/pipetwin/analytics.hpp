#pragma once

// Execution metrics per structural version, cross-version deltas, failure
// categories and execution overlays.

#include "pipetwin/bpmn.hpp"
#include "pipetwin/model.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pipetwin::analytics {

inline constexpr std::string_view kMetricsSchema = "pipetwin.metrics/1";
inline constexpr std::string_view kMetricsDeltaSchema = "pipetwin.metrics-delta/1";
inline constexpr std::string_view kOverlaySchema = "pipetwin.overlay/1";

enum class FailureCategory { infrastructure, script, other };

inline constexpr FailureCategory kAllFailureCategories[] = {
    FailureCategory::infrastructure, FailureCategory::script, FailureCategory::other};

std::string_view to_string(FailureCategory c);

class NotAFailure : public Error {
public:
    using Error::Error;
};

/// Statistics are nullopt when no run contributes to them.
struct VersionMetrics {
    std::string yaml_hash;
    int runs = 0;
    std::optional<int> job_count;
    std::optional<double> success_rate_pct;
    std::optional<double> avg_duration_s;
    std::optional<double> median_duration_s;
    std::map<std::string, double> stage_avg_s;
    std::optional<double> avg_queue_s;
    std::map<FailureCategory, int> failure_categories;

    bool operator==(const VersionMetrics&) const = default;
};

/// Half-to-even rounding of num/den to one decimal, computed exactly.
double round_ratio_1dp(long long num, long long den);

/// Half-to-even rounding of a double to one decimal.
double round_1dp(double v);

/// Median of a non-empty list; even lengths average the two central values.
double median(std::vector<double> values);

FailureCategory categorize(const JobRun& job_run);

/// Runs must share one yaml_hash. `model` supplies the job -> stage mapping
/// and the job count. Duration statistics use finished runs (success, failed,
/// canceled, skipped) that carry a duration; stage averages use job runs
/// that executed (success, failed, canceled).
VersionMetrics aggregate(std::span<const PipelineRun> runs, const Pipeline& model);

enum class DeltaUnit { count, percentage_points, percent, none };

std::string_view to_string(DeltaUnit u);

/// `delta` is nullopt when undefined: a side is missing, the base is zero,
/// or the unit is `none`.
struct MetricDelta {
    std::optional<double> before;
    std::optional<double> after;
    std::optional<double> delta;
    DeltaUnit unit = DeltaUnit::none;

    bool operator==(const MetricDelta&) const = default;
};

/// pp: after - before. percent: 100 * (after / before - 1). Both rounded
/// half-to-even to one decimal. count: after - before.
MetricDelta metric_delta(std::optional<double> before, std::optional<double> after, DeltaUnit unit);

struct MetricsDelta {
    std::string from_hash;
    std::string to_hash;
    MetricDelta jobs;
    MetricDelta runs;
    MetricDelta success_rate;
    MetricDelta avg_duration;
    MetricDelta median_duration;
    std::map<std::string, MetricDelta> stage_avg;
    MetricDelta avg_queue;

    bool operator==(const MetricsDelta&) const = default;
};

MetricsDelta delta(const VersionMetrics& m1, const VersionMetrics& m2);

struct OverlayEntry {
    ExecutionStatus status = ExecutionStatus::skipped;
    std::optional<double> duration_s;
    std::optional<std::string> failure_reason;

    bool operator==(const OverlayEntry&) const = default;
};

struct ExecutionOverlay {
    std::string run_id;
    std::map<std::string, OverlayEntry> elements;

    bool operator==(const ExecutionOverlay&) const = default;
};

/// Every job in the document gets an entry; jobs absent from the run are
/// skipped. Throws bpmn::MissingElement for a job run the document lacks.
ExecutionOverlay overlay(const PipelineRun& run, const bpmn::BpmnDocument& doc);

nlohmann::json to_json(const VersionMetrics& m);
VersionMetrics metrics_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const MetricsDelta& d);
nlohmann::json to_json(const ExecutionOverlay& o);

/// "+29.8 pp", "-26.2%", "+1519%" (magnitudes of 1000% and above drop the
/// decimal), "–" when undefined.
std::string format_delta(const MetricDelta& d);

/// Table with one row per metric: name, before, after, delta.
std::string format_table(const MetricsDelta& d, const std::vector<std::string>& stage_order = {});

} // namespace pipetwin::analytics
