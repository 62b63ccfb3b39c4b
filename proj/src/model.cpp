#include "pipetwin/model.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <utility>

namespace pipetwin {

namespace {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<WhenPolicy, 5> kWhenNames{{
    {WhenPolicy::on_success, "on_success"},
    {WhenPolicy::manual, "manual"},
    {WhenPolicy::always, "always"},
    {WhenPolicy::on_failure, "on_failure"},
    {WhenPolicy::delayed, "delayed"},
}};

constexpr NameTable<TriggerType, 6> kTriggerNames{{
    {TriggerType::push, "push"},
    {TriggerType::merge_request, "merge_request"},
    {TriggerType::schedule, "schedule"},
    {TriggerType::api, "api"},
    {TriggerType::web, "web"},
    {TriggerType::tag_push, "tag_push"},
}};

constexpr NameTable<ExecutionStatus, 7> kStatusNames{{
    {ExecutionStatus::success, "success"},
    {ExecutionStatus::failed, "failed"},
    {ExecutionStatus::canceled, "canceled"},
    {ExecutionStatus::skipped, "skipped"},
    {ExecutionStatus::running, "running"},
    {ExecutionStatus::pending, "pending"},
    {ExecutionStatus::manual, "manual"},
}};

constexpr NameTable<ConditionKind, 3> kConditionNames{{
    {ConditionKind::if_expr, "if"},
    {ConditionKind::changes, "changes"},
    {ConditionKind::exists, "exists"},
}};

constexpr NameTable<VariableScope, 2> kScopeNames{{
    {VariableScope::pipeline, "pipeline"},
    {VariableScope::job, "job"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E value) {
    for (const auto& [v, name] : table) {
        if (v == value) return name;
    }
    return "?";
}

template <typename E, std::size_t N>
std::optional<E> value_of(const NameTable<E, N>& table, std::string_view s) {
    for (const auto& [v, name] : table) {
        if (name == s) return v;
    }
    return std::nullopt;
}

bool parse_digits(std::string_view s, int& out) {
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

} // namespace

std::string_view to_string(WhenPolicy v) { return name_of(kWhenNames, v); }
std::string_view to_string(TriggerType v) { return name_of(kTriggerNames, v); }
std::string_view to_string(ExecutionStatus v) { return name_of(kStatusNames, v); }
std::string_view to_string(ConditionKind v) { return name_of(kConditionNames, v); }
std::string_view to_string(VariableScope v) { return name_of(kScopeNames, v); }

std::optional<WhenPolicy> parse_when_policy(std::string_view s) { return value_of(kWhenNames, s); }
std::optional<TriggerType> parse_trigger_type(std::string_view s) { return value_of(kTriggerNames, s); }
std::optional<ExecutionStatus> parse_execution_status(std::string_view s) {
    return value_of(kStatusNames, s);
}
std::optional<ConditionKind> parse_condition_kind(std::string_view s) {
    return value_of(kConditionNames, s);
}
std::optional<VariableScope> parse_variable_scope(std::string_view s) {
    return value_of(kScopeNames, s);
}

const Job* Pipeline::find_job(std::string_view name) const {
    auto it = std::find_if(jobs.begin(), jobs.end(), [&](const Job& j) { return j.name == name; });
    return it == jobs.end() ? nullptr : &*it;
}

std::optional<std::size_t> Pipeline::stage_index(std::string_view stage) const {
    auto it = std::find(stage_order.begin(), stage_order.end(), stage);
    if (it == stage_order.end()) return std::nullopt;
    return static_cast<std::size_t>(it - stage_order.begin());
}

std::vector<Stage> Pipeline::stages() const {
    std::vector<Stage> out;
    out.reserve(stage_order.size());
    for (std::size_t i = 0; i < stage_order.size(); ++i) out.push_back({stage_order[i], i});
    return out;
}

std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    const auto day = floor<days>(t);
    const year_month_day ymd{day};
    const hh_mm_ss hms{t - day};
    const auto ms = hms.subseconds().count();

    char buf[40];
    if (ms == 0) {
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()),
                      unsigned(ymd.month()), unsigned(ymd.day()), int(hms.hours().count()),
                      int(hms.minutes().count()), int(hms.seconds().count()));
    } else {
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", int(ymd.year()),
                      unsigned(ymd.month()), unsigned(ymd.day()), int(hms.hours().count()),
                      int(hms.minutes().count()), int(hms.seconds().count()), int(ms));
    }
    return buf;
}

std::optional<Timestamp> parse_timestamp(std::string_view s) {
    using namespace std::chrono;
    // YYYY-MM-DDTHH:MM:SS is 19 characters.
    if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
        s[13] != ':' || s[16] != ':')
        return std::nullopt;

    int y, mo, d, h, mi, sec;
    if (!parse_digits(s.substr(0, 4), y) || !parse_digits(s.substr(5, 2), mo) ||
        !parse_digits(s.substr(8, 2), d) || !parse_digits(s.substr(11, 2), h) ||
        !parse_digits(s.substr(14, 2), mi) || !parse_digits(s.substr(17, 2), sec))
        return std::nullopt;

    const year_month_day ymd{year{y}, month{unsigned(mo)}, day{unsigned(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;

    std::size_t pos = 19;
    int millis = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        int digits = 0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            if (digits < 3) millis = millis * 10 + (s[pos] - '0');
            ++digits;
            ++pos;
        }
        if (digits == 0) return std::nullopt;
        for (int i = digits; i < 3; ++i) millis *= 10;
    }

    minutes offset{0};
    if (pos < s.size()) {
        const char sign = s[pos];
        if (sign == 'Z' || sign == 'z') {
            ++pos;
        } else if (sign == '+' || sign == '-') {
            auto rest = s.substr(pos + 1);
            int oh = 0, om = 0;
            if (rest.size() == 5 && rest[2] == ':') {
                if (!parse_digits(rest.substr(0, 2), oh) || !parse_digits(rest.substr(3, 2), om))
                    return std::nullopt;
            } else if (rest.size() == 4) {
                if (!parse_digits(rest.substr(0, 2), oh) || !parse_digits(rest.substr(2, 2), om))
                    return std::nullopt;
            } else {
                return std::nullopt;
            }
            offset = hours{oh} + minutes{om};
            if (sign == '-') offset = -offset;
            pos = s.size();
        } else {
            return std::nullopt;
        }
    }
    if (pos != s.size()) return std::nullopt;

    Timestamp local = sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec} + milliseconds{millis};
    return local - offset;
}

} // namespace pipetwin
