#include "pipetwin/forge.hpp"

#include "pipetwin/validate.hpp"

#include <httplib.h>

#include <algorithm>
#include <condition_variable>
#include <regex>
#include <thread>

namespace pipetwin::forge {

using nlohmann::json;
using Params = std::vector<std::pair<std::string, std::string>>;

namespace {

struct ParsedUrl {
    std::string scheme;
    std::string host;
    std::string port;
    std::string path;
};

std::optional<ParsedUrl> parse_url(const std::string& url) {
    static const std::regex re(R"(^(https?)://(\[[^\]]+\]|[^/:?#]+)(?::(\d+))?(/[^?#]*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(url, m, re)) return std::nullopt;
    ParsedUrl u{m[1], m[2], m[3], m[4]};
    std::transform(u.scheme.begin(), u.scheme.end(), u.scheme.begin(), ::tolower);
    while (!u.path.empty() && u.path.back() == '/') u.path.pop_back();
    return u;
}

bool is_loopback(const std::string& host) {
    return host == "localhost" || host == "[::1]" || host.rfind("127.", 0) == 0;
}

std::string enc(const std::string& s) { return httplib::detail::encode_query_param(s); }

std::string with_query(const std::string& path, const Params& params) {
    std::string out = path;
    char sep = '?';
    for (const auto& [k, v] : params) {
        out += sep;
        out += k + "=" + enc(v);
        sep = '&';
    }
    return out;
}

std::optional<Timestamp> ts(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) return std::nullopt;
    return parse_timestamp(it->get<std::string>());
}

std::optional<double> num(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number()) return std::nullopt;
    return it->get<double>();
}

std::string id_string(const json& j) {
    const auto& id = j.at("id");
    return id.is_string() ? id.get<std::string>() : std::to_string(id.get<long long>());
}

} // namespace

json to_json(const ProjectHandle& h) {
    return json{{"base_url", h.base_url},
                {"project_id", h.project_id},
                {"ci_file_path", h.ci_file_path},
                {"ref", h.ref}};
}

ProjectHandle handle_from_json(const json& j) {
    try {
        ProjectHandle h;
        h.base_url = j.at("base_url").get<std::string>();
        const auto& id = j.at("project_id");
        h.project_id = id.is_string() ? id.get<std::string>() : std::to_string(id.get<long long>());
        h.ci_file_path = j.value("ci_file_path", std::string(".gitlab-ci.yml"));
        h.ref = j.value("ref", std::string());
        return h;
    } catch (const json::exception& e) {
        throw InvalidHandle(std::string("project handle: ") + e.what());
    }
}

void check_handle(const ProjectHandle& h) {
    const auto url = parse_url(h.base_url);
    if (!url) throw InvalidHandle("base_url '" + h.base_url + "' is not an absolute http(s) URL");
    if (url->scheme != "https" && !is_loopback(url->host))
        throw InvalidHandle("base_url must use https (plain http is accepted for loopback hosts only)");
    if (h.project_id.empty()) throw InvalidHandle("project_id is empty");
    if (h.ci_file_path.empty()) throw InvalidHandle("ci_file_path is empty");
}

std::string_view to_string(ForgeErrorKind k) {
    switch (k) {
    case ForgeErrorKind::auth_failed: return "AuthFailed";
    case ForgeErrorKind::not_found: return "NotFound";
    case ForgeErrorKind::rate_limited: return "RateLimited";
    case ForgeErrorKind::transport: return "Transport";
    }
    return "Transport";
}

ForgeError::ForgeError(ForgeErrorKind kind, const std::string& message, int http_status,
                       std::optional<std::chrono::seconds> retry_after)
    : Error(message), kind_(kind), http_status_(http_status), retry_after_(retry_after) {}

json to_json(const ConfigSnapshot& s) {
    const auto& p = s.raw.provenance;
    return json{{"raw_bytes", s.raw.raw_bytes},
                {"ref", p.ref},
                {"commit_sha", p.commit_sha},
                {"file_path", p.file_path},
                {"yaml_hash", compute_yaml_hash(s.raw.raw_bytes)},
                {"committed_at", format_timestamp(s.committed_at)},
                {"fetched_at", format_timestamp(s.fetched_at)}};
}

ConfigSnapshot snapshot_from_json(const json& j) {
    try {
        ConfigSnapshot s;
        s.raw.raw_bytes = j.at("raw_bytes").get<std::string>();
        s.raw.provenance.ref = j.at("ref").get<std::string>();
        s.raw.provenance.commit_sha = j.at("commit_sha").get<std::string>();
        s.raw.provenance.file_path = j.at("file_path").get<std::string>();
        auto committed = parse_timestamp(j.at("committed_at").get<std::string>());
        auto fetched = parse_timestamp(j.at("fetched_at").get<std::string>());
        if (!committed || !fetched) throw Error("snapshot: bad timestamp");
        s.committed_at = *committed;
        s.fetched_at = *fetched;
        return s;
    } catch (const json::exception& e) {
        throw Error(std::string("snapshot: ") + e.what());
    }
}

std::optional<ExecutionStatus> map_status(std::string_view s) {
    // Exact names only; created, preparing, waiting_for_resource, scheduled
    // and canceling have no counterpart.
    return parse_execution_status(s);
}

std::optional<TriggerType> map_source(std::string_view s, bool tag) {
    if (s == "push") return tag ? TriggerType::tag_push : TriggerType::push;
    if (s == "merge_request_event") return TriggerType::merge_request;
    if (s == "schedule") return TriggerType::schedule;
    if (s == "api" || s == "trigger") return TriggerType::api;
    if (s == "web") return TriggerType::web;
    return std::nullopt;
}

GitLabClient::GitLabClient(ProjectHandle handle, ClientOptions options)
    : handle_(std::move(handle)), options_(std::move(options)) {
    check_handle(handle_);
    const auto url = *parse_url(handle_.base_url);
    origin_ = url.scheme + "://" + url.host + (url.port.empty() ? "" : ":" + url.port);
    prefix_ = url.path;
    if (prefix_.size() < 7 || prefix_.compare(prefix_.size() - 7, 7, "/api/v4") != 0) prefix_ += "/api/v4";
    if (options_.per_page < 1) options_.per_page = 1;
}

GitLabClient::~GitLabClient() = default;

Timestamp GitLabClient::now() const {
    if (options_.clock) return options_.clock();
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

std::string GitLabClient::project_path() const { return prefix_ + "/projects/" + enc(handle_.project_id); }

std::size_t GitLabClient::request_count() const {
    std::lock_guard lock(mu_);
    return requests_;
}

GitLabClient::Response GitLabClient::get(const std::string& path, const Params& params, const std::string& what) {
    {
        std::lock_guard lock(mu_);
        ++requests_;
    }
    httplib::Client cli(origin_);
    cli.set_url_encode(false);
    cli.set_connection_timeout(options_.timeout);
    cli.set_read_timeout(options_.timeout);
    cli.set_follow_location(false);

    httplib::Headers headers{{"Accept", "application/json"}};
    if (handle_.token) headers.emplace("PRIVATE-TOKEN", *handle_.token);

    auto res = cli.Get(with_query(path, params), headers);
    if (!res) throw ForgeError(ForgeErrorKind::transport, what + ": " + httplib::to_string(res.error()));

    const int status = res->status;
    if (status == 401 || status == 403)
        throw ForgeError(ForgeErrorKind::auth_failed, what + ": authentication failed (HTTP " +
                                                          std::to_string(status) + ")", status);
    if (status == 404) throw ForgeError(ForgeErrorKind::not_found, what + ": not found", status);
    if (status == 429) {
        std::optional<std::chrono::seconds> retry;
        if (res->has_header("Retry-After")) {
            try {
                retry = std::chrono::seconds(std::stoll(res->get_header_value("Retry-After")));
            } catch (const std::exception&) {
            }
        }
        throw ForgeError(ForgeErrorKind::rate_limited, what + ": rate limited", status, retry);
    }
    if (status < 200 || status >= 300)
        throw ForgeError(ForgeErrorKind::transport, what + ": HTTP " + std::to_string(status), status);

    Response out{res->body, {}};
    for (const auto& [k, v] : res->headers) out.headers[k] = v;
    return out;
}

json GitLabClient::get_json(const std::string& path, const Params& params, const std::string& what,
                            std::map<std::string, std::string>* headers) {
    auto r = get(path, params, what);
    if (headers) *headers = r.headers;
    try {
        return json::parse(r.body);
    } catch (const json::exception& e) {
        throw ForgeError(ForgeErrorKind::transport, what + ": malformed JSON: " + e.what());
    }
}

std::vector<json> GitLabClient::get_paged(const std::string& path, Params params, const std::string& what,
                                          std::optional<int> limit) {
    std::vector<json> out;
    int page = 1;
    const int per_page = limit ? std::min(options_.per_page, std::max(*limit, 1)) : options_.per_page;
    params.emplace_back("per_page", std::to_string(per_page));
    while (true) {
        auto p = params;
        p.emplace_back("page", std::to_string(page));
        std::map<std::string, std::string> headers;
        auto body = get_json(path, p, what, &headers);
        if (!body.is_array()) throw ForgeError(ForgeErrorKind::transport, what + ": expected a JSON array");
        for (auto& item : body) {
            if (limit && int(out.size()) >= *limit) return out;
            out.push_back(std::move(item));
        }
        if (limit && int(out.size()) >= *limit) return out;

        auto next = headers.find("X-Next-Page");
        if (next != headers.end()) {
            if (next->second.empty()) return out;
            try {
                page = std::stoi(next->second);
            } catch (const std::exception&) {
                return out;
            }
        } else {
            if (int(body.size()) < per_page) return out;
            ++page;
        }
    }
}

std::string GitLabClient::resolve_ref() {
    {
        std::lock_guard lock(mu_);
        if (!handle_.ref.empty()) return handle_.ref;
        if (resolved_ref_) return *resolved_ref_;
    }
    auto project = get_json(project_path(), {}, "project '" + handle_.project_id + "'");
    auto branch = project.value("default_branch", std::string("main"));
    std::lock_guard lock(mu_);
    resolved_ref_ = branch;
    return branch;
}

std::string GitLabClient::file_at(const std::string& sha) {
    {
        std::lock_guard lock(mu_);
        if (auto it = file_cache_.find(sha); it != file_cache_.end()) return it->second;
    }
    auto r = get(project_path() + "/repository/files/" + enc(handle_.ci_file_path) + "/raw", {{"ref", sha}},
                 "file '" + handle_.ci_file_path + "' at " + sha);
    std::lock_guard lock(mu_);
    file_cache_[sha] = r.body;
    return r.body;
}

std::vector<ConfigSnapshot> GitLabClient::list_config_versions(const VersionQuery& q) {
    const auto ref = resolve_ref();
    Params params{{"path", handle_.ci_file_path}, {"ref_name", ref}};
    if (q.since) params.emplace_back("since", format_timestamp(*q.since));
    if (q.until) params.emplace_back("until", format_timestamp(*q.until));
    auto commits = get_paged(project_path() + "/repository/commits", params,
                             "commits touching '" + handle_.ci_file_path + "'", q.limit);
    if (commits.empty() && !q.since && !q.until)
        throw ForgeError(ForgeErrorKind::not_found, "no commits touch '" + handle_.ci_file_path + "' on " + ref, 404);

    std::vector<ConfigSnapshot> out;
    for (const auto& c : commits) {
        ConfigSnapshot s;
        s.raw.provenance = {ref, c.at("id").get<std::string>(), handle_.ci_file_path};
        auto when = ts(c, "committed_date");
        if (!when) when = ts(c, "created_at");
        s.committed_at = when.value_or(Timestamp{});
        s.raw.raw_bytes = file_at(s.raw.provenance.commit_sha);
        s.fetched_at = now();
        out.push_back(std::move(s));
    }
    return out;
}

std::optional<ConfigSnapshot> GitLabClient::latest_snapshot() {
    auto v = list_config_versions({1, std::nullopt, std::nullopt});
    if (v.empty()) return std::nullopt;
    return v.front();
}

RunBatch GitLabClient::fetch_runs(const RunQuery& q) {
    Params params{{"order_by", "id"}, {"sort", "desc"}};
    if (q.ref) params.emplace_back("ref", *q.ref);
    if (q.sha) params.emplace_back("sha", *q.sha);
    auto pipelines = get_paged(project_path() + "/pipelines", params, "pipelines", q.limit);

    RunBatch batch;
    for (const auto& summary : pipelines) {
        const auto run_id = id_string(summary);
        const auto base = project_path() + "/pipelines/" + run_id;
        const auto detail = get_json(base, {}, "pipeline " + run_id);

        auto reject = [&](std::string reason) { batch.rejected.push_back({run_id, std::move(reason)}); };

        const auto status_name = detail.value("status", summary.value("status", std::string()));
        const auto status = map_status(status_name);
        if (!status) {
            reject("unmapped pipeline status '" + status_name + "'");
            continue;
        }
        const auto source_name = detail.value("source", summary.value("source", std::string()));
        const auto source = map_source(source_name, detail.value("tag", false));
        if (!source) {
            reject("unmapped pipeline source '" + source_name + "'");
            continue;
        }

        PipelineRun run;
        run.run_id = run_id;
        run.status = *status;
        run.source = *source;
        run.started_at = ts(detail, "started_at");
        run.finished_at = ts(detail, "finished_at");
        run.duration_s = num(detail, "duration");

        bool ok = true;
        for (const auto& j : get_paged(base + "/jobs", {}, "jobs of pipeline " + run_id, std::nullopt)) {
            const auto job_status_name = j.value("status", std::string());
            const auto job_status = map_status(job_status_name);
            if (!job_status) {
                reject("job '" + j.value("name", std::string()) + "' has unmapped status '" + job_status_name + "'");
                ok = false;
                break;
            }
            JobRun jr;
            jr.job_name = j.value("name", std::string());
            jr.status = *job_status;
            jr.started_at = ts(j, "started_at");
            jr.finished_at = ts(j, "finished_at");
            jr.duration_s = num(j, "duration");
            jr.queued_s = num(j, "queued_duration");
            if (jr.status == ExecutionStatus::failed && j.contains("failure_reason") && j["failure_reason"].is_string())
                jr.failure_reason = j["failure_reason"].get<std::string>();
            run.job_runs.push_back(std::move(jr));
        }
        if (!ok) continue;

        const auto sha = detail.value("sha", summary.value("sha", std::string()));
        try {
            run.pipeline_yaml_hash = compute_yaml_hash(file_at(sha));
        } catch (const ForgeError& e) {
            if (e.kind() != ForgeErrorKind::not_found) throw;
            reject("no '" + handle_.ci_file_path + "' at commit " + sha);
            continue;
        }
        batch.runs.push_back(std::move(run));
    }
    return batch;
}

ChangeTracker::ChangeTracker(GitLabClient& client, std::optional<std::string> last_seen_hash)
    : client_(client), last_hash_(std::move(last_seen_hash)) {}

std::optional<ConfigSnapshot> ChangeTracker::poll() {
    auto snap = client_.latest_snapshot();
    if (!snap) return std::nullopt;
    auto hash = compute_yaml_hash(snap->raw.raw_bytes);
    if (last_hash_ && *last_hash_ == hash) return std::nullopt;
    last_hash_ = std::move(hash);
    return snap;
}

std::chrono::milliseconds ChangeTracker::backoff(int attempt) {
    using namespace std::chrono;
    constexpr milliseconds base = seconds(1);
    constexpr milliseconds cap = minutes(5);
    if (attempt < 0) attempt = 0;
    if (attempt >= 20) return cap;
    return std::min<milliseconds>(cap, base * (1LL << attempt));
}

void ChangeTracker::run(std::chrono::milliseconds interval,
                        const std::function<void(const ConfigSnapshot&)>& on_change, std::stop_token stop) {
    std::mutex m;
    std::condition_variable_any cv;
    auto sleep = [&](std::chrono::milliseconds d) {
        std::unique_lock lock(m);
        cv.wait_for(lock, stop, d, [] { return false; });
    };

    int failures = 0;
    while (!stop.stop_requested()) {
        try {
            if (auto snap = poll()) on_change(*snap);
            failures = 0;
            sleep(interval);
        } catch (const ForgeError& e) {
            if (e.kind() == ForgeErrorKind::auth_failed || e.kind() == ForgeErrorKind::not_found) throw;
            auto wait = backoff(failures++);
            if (e.retry_after()) wait = std::max<std::chrono::milliseconds>(wait, *e.retry_after());
            sleep(wait);
        }
    }
}

} // namespace pipetwin::forge
