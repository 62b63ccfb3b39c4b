#include "pipetwin/twin.hpp"

#include "pipetwin/model_json.hpp"
#include "pipetwin/parser.hpp"
#include "pipetwin/validate.hpp"

#include <algorithm>
#include <charconv>

namespace pipetwin::twin {

using nlohmann::json;

namespace {

constexpr Topic kConsumed[] = {Topic::config_snapshot, Topic::change_detection, Topic::execution_data};

Timestamp parse_ts(const json& j, const char* key) {
    auto t = parse_timestamp(j.at(key).get<std::string>());
    if (!t) throw Corrupt(std::string("bad timestamp in '") + key + "'");
    return *t;
}

bool earlier(Timestamp a_at, const std::string& a_sha, Timestamp b_at, const std::string& b_sha) {
    return std::tie(a_at, a_sha) < std::tie(b_at, b_sha);
}

std::optional<long long> numeric(const std::string& s) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

bool run_id_less(const std::string& a, const std::string& b) {
    auto na = numeric(a), nb = numeric(b);
    if (na && nb) return *na < *nb;
    if (na != nb) return bool(na);
    return a < b;
}

json violations_json(const std::vector<Violation>& vs) {
    json out = json::array();
    for (const auto& v : vs) out.push_back({{"rule", v.rule}, {"entity", v.entity}, {"message", v.message}});
    return out;
}

} // namespace

json to_json(const VersionInfo& v) {
    return json{{"schema", kVersionSchema},     {"yaml_hash", v.yaml_hash},
                {"commit_sha", v.commit_sha},   {"ref", v.ref},
                {"first_seen", format_timestamp(v.first_seen)}, {"job_count", v.job_count}};
}

VersionInfo version_from_json(const json& j) {
    try {
        VersionInfo v;
        v.yaml_hash = j.at("yaml_hash").get<std::string>();
        v.commit_sha = j.at("commit_sha").get<std::string>();
        v.ref = j.at("ref").get<std::string>();
        v.first_seen = parse_ts(j, "first_seen");
        v.job_count = j.at("job_count").get<int>();
        return v;
    } catch (const json::exception& e) {
        throw Corrupt(std::string("version record: ") + e.what());
    }
}

json bpmn_to_json(const std::string& yaml_hash, const bpmn::BpmnDocument& doc) {
    return json{{"schema", kBpmnSchema},
                {"yaml_hash", yaml_hash},
                {"xml", doc.xml},
                {"element_index", doc.element_index},
                {"gateway_ids", doc.gateway_ids},
                {"lane_index", doc.lane_index}};
}

bpmn::BpmnDocument bpmn_from_json(const json& j) {
    try {
        bpmn::BpmnDocument doc;
        doc.xml = j.at("xml").get<std::string>();
        doc.element_index = j.at("element_index").get<std::map<std::string, std::string>>();
        doc.gateway_ids = j.at("gateway_ids").get<std::vector<std::string>>();
        doc.lane_index = j.at("lane_index").get<std::map<std::string, std::string>>();
        return doc;
    } catch (const json::exception& e) {
        throw Corrupt(std::string("bpmn record: ") + e.what());
    }
}

json to_json(const SyncReport& r) {
    json rejected = json::array();
    for (const auto& m : r.rejected) rejected.push_back({{"run_id", m.run_id}, {"reason", m.reason}});
    return json{{"snapshots", r.snapshots}, {"runs", r.runs}, {"rejected", rejected}};
}

struct Twin::Worker {
    Topic topic;
    std::unique_ptr<Subscription> sub;
    std::jthread thread;
};

Twin::Twin(Store& store, Bus& bus, TwinOptions options) : store_(store), bus_(bus), options_(std::move(options)) {
    if (!options_.client_factory) {
        options_.client_factory = [](const forge::ProjectHandle& h) {
            return std::make_unique<forge::GitLabClient>(h);
        };
    }
}

Twin::~Twin() { stop(); }

void Twin::start() {
    if (!workers_.empty()) return;
    for (auto t : kConsumed) {
        auto w = std::make_unique<Worker>();
        w->topic = t;
        w->sub = bus_.subscribe(t);
        {
            std::lock_guard lock(progress_mu_);
            handled_[t] = bus_.last_sequence(t);
        }
        Subscription* sub = w->sub.get();
        w->thread = std::jthread([this, sub, t] {
            while (auto e = sub->next()) {
                try {
                    handle(*e);
                } catch (const std::exception& ex) {
                    record_error(t, e->sequence, ex.what());
                }
                {
                    std::lock_guard lock(progress_mu_);
                    handled_[t] = e->sequence;
                    ++processed_count_[t];
                }
                progress_cv_.notify_all();
            }
        });
        workers_.push_back(std::move(w));
    }
}

void Twin::stop() {
    for (auto& t : trackers_) t.request_stop();
    trackers_.clear();
    for (auto& w : workers_) w->sub->close();
    for (auto& w : workers_) {
        if (w->thread.joinable()) w->thread.join();
    }
    workers_.clear();
    progress_cv_.notify_all();
}

void Twin::register_project(const forge::ProjectHandle& handle) {
    forge::check_handle(handle);
    if (handle.project_id.empty()) throw forge::InvalidHandle("project_id is empty");
    store_.put(Namespace::operational, keys::project(handle.project_id),
               json{{"schema", kProjectSchema}, {"handle", forge::to_json(handle)}});
    std::lock_guard lock(mu_);
    if (handle.token) tokens_[handle.project_id] = *handle.token;
}

std::vector<forge::ProjectHandle> Twin::projects() const {
    std::vector<forge::ProjectHandle> out;
    for (const auto& key : store_.keys(Namespace::operational, "project/")) {
        if (auto j = store_.get(Namespace::operational, key, kProjectSchema))
            out.push_back(forge::handle_from_json(j->at("handle")));
    }
    return out;
}

std::optional<forge::ProjectHandle> Twin::project(const std::string& project_id) const {
    auto j = store_.get(Namespace::operational, keys::project(project_id), kProjectSchema);
    if (!j) return std::nullopt;
    return forge::handle_from_json(j->at("handle"));
}

std::unique_ptr<forge::GitLabClient> Twin::client_for(const std::string& project_id) const {
    auto h = project(project_id);
    if (!h) throw UnknownProject("unknown project '" + project_id + "'");
    {
        std::lock_guard lock(mu_);
        if (auto it = tokens_.find(project_id); it != tokens_.end()) h->token = it->second;
    }
    return options_.client_factory(*h);
}

std::mutex& Twin::project_mutex(const std::string& project_id) {
    std::lock_guard lock(mu_);
    auto& m = project_mu_[project_id];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
}

SyncReport Twin::sync(const std::string& project_id, const forge::VersionQuery& versions,
                      const forge::RunQuery& runs) {
    auto client = client_for(project_id);
    std::lock_guard serial(project_mutex(project_id));

    SyncReport report;
    auto snaps = client->list_config_versions(versions);
    for (auto it = snaps.rbegin(); it != snaps.rend(); ++it) {
        bus_.publish(Topic::config_snapshot, json{{"project_id", project_id}, {"snapshot", forge::to_json(*it)}});
        ++report.snapshots;
    }
    if (!snaps.empty() && !versions.until) {
        std::lock_guard lock(mu_);
        last_seen_hash_[project_id] = compute_yaml_hash(snaps.front().raw.raw_bytes);
    }

    auto batch = client->fetch_runs(runs);
    for (const auto& r : batch.runs) {
        bus_.publish(Topic::execution_data, json{{"project_id", project_id}, {"run", run_to_json(r)}});
        ++report.runs;
    }
    report.rejected = std::move(batch.rejected);
    return report;
}

bool Twin::poll_changes(const std::string& project_id) {
    auto client = client_for(project_id);
    std::lock_guard serial(project_mutex(project_id));
    std::optional<std::string> last;
    {
        std::lock_guard lock(mu_);
        last = last_seen_hash_[project_id];
    }
    forge::ChangeTracker tracker(*client, last);
    auto snap = tracker.poll();
    {
        std::lock_guard lock(mu_);
        last_seen_hash_[project_id] = tracker.last_seen_hash();
    }
    if (!snap) return false;
    bus_.publish(Topic::change_detection, json{{"project_id", project_id}, {"snapshot", forge::to_json(*snap)}});
    return true;
}

void Twin::start_tracking(std::chrono::milliseconds interval) {
    for (const auto& h : projects()) {
        const std::string id = h.project_id;
        trackers_.emplace_back([this, id, interval](std::stop_token st) {
            try {
                auto client = client_for(id);
                std::optional<std::string> last;
                {
                    std::lock_guard lock(mu_);
                    last = last_seen_hash_[id];
                }
                forge::ChangeTracker tracker(*client, last);
                tracker.run(
                    interval,
                    [&](const forge::ConfigSnapshot& s) {
                        {
                            std::lock_guard lock(mu_);
                            last_seen_hash_[id] = compute_yaml_hash(s.raw.raw_bytes);
                        }
                        bus_.publish(Topic::change_detection,
                                     json{{"project_id", id}, {"snapshot", forge::to_json(s)}});
                    },
                    st);
            } catch (const std::exception& e) {
                record_error(Topic::change_detection, 0, "tracking " + id + ": " + e.what());
            }
        });
    }
}

void Twin::handle(const Envelope& e) {
    const auto project_id = e.payload.at("project_id").get<std::string>();
    switch (e.topic) {
    case Topic::config_snapshot:
    case Topic::change_detection:
        ingest_snapshot(project_id, forge::snapshot_from_json(e.payload.at("snapshot")));
        break;
    case Topic::execution_data:
        ingest_run(project_id, run_from_json(e.payload.at("run")));
        break;
    case Topic::bpmn_xml:
        break;
    }
}

void Twin::ingest_snapshot(const std::string& project_id, const forge::ConfigSnapshot& snapshot) {
    std::lock_guard serial(ingest_mu_);
    const auto hash = compute_yaml_hash(snapshot.raw.raw_bytes);
    const auto& sha = snapshot.raw.provenance.commit_sha;

    auto existing = store_.get(Namespace::operational, keys::version(project_id, hash), kVersionSchema);
    const bool defines_version =
        !existing || earlier(snapshot.committed_at, sha, parse_ts(*existing, "first_seen"),
                             existing->at("commit_sha").get<std::string>());

    std::optional<Pipeline> pipeline;
    if (defines_version) {
        try {
            pipeline = parse(snapshot.raw);
        } catch (const ParseError& err) {
            const auto fkey = keys::failure(project_id, hash);
            auto prior = store_.get(Namespace::operational, fkey, kFailureSchema);
            if (!prior || earlier(snapshot.committed_at, sha, parse_ts(*prior, "committed_at"),
                                  prior->at("commit_sha").get<std::string>())) {
                store_.put(Namespace::operational, fkey,
                           json{{"schema", kFailureSchema},
                                {"yaml_hash", hash},
                                {"commit_sha", sha},
                                {"committed_at", format_timestamp(snapshot.committed_at)},
                                {"stage", "parse"},
                                {"kind", to_string(err.kind())},
                                {"message", err.what()},
                                {"violations", violations_json(err.violations())}});
            }
            record_error(Topic::config_snapshot, 0, "snapshot " + sha + ": " + err.what());
            return;
        }
        VersionInfo v{hash, sha, snapshot.raw.provenance.ref, snapshot.committed_at, int(pipeline->jobs.size())};
        store_.put(Namespace::operational, keys::model(project_id, hash), model_to_json(*pipeline));
        store_.put(Namespace::operational, keys::version(project_id, hash), to_json(v));
    }

    const auto bkey = keys::bpmn(project_id, hash);
    if (store_.contains(Namespace::analytical, bkey)) return;

    if (!pipeline) {
        auto stored = store_.get(Namespace::operational, keys::model(project_id, hash), kModelSchema);
        if (!stored) return;
        pipeline = model_from_json(*stored);
    }

    bpmn::BpmnDocument doc;
    try {
        doc = bpmn::generate(*pipeline, options_.layout);
    } catch (const bpmn::GenerationError& err) {
        store_.put(Namespace::operational, keys::failure(project_id, hash),
                   json{{"schema", kFailureSchema},
                        {"yaml_hash", hash},
                        {"commit_sha", pipeline->commit_sha},
                        {"committed_at", format_timestamp(snapshot.committed_at)},
                        {"stage", "generate"},
                        {"kind", err.kind() == bpmn::GenerationErrorKind::invalid_pipeline ? "invalid_pipeline"
                                                                                           : "sanitization_collision"},
                        {"message", err.what()},
                        {"violations", violations_json(err.violations())}});
        record_error(Topic::config_snapshot, 0, "generate " + hash + ": " + err.what());
        return;
    }
    ++generations_;
    store_.put(Namespace::analytical, bkey, bpmn_to_json(hash, doc));
    bus_.publish(Topic::bpmn_xml, json{{"project_id", project_id}, {"yaml_hash", hash}, {"xml", doc.xml}});
}

void Twin::ingest_run(const std::string& project_id, const PipelineRun& run) {
    store_.put(Namespace::operational, keys::run(project_id, run.run_id), run_to_json(run));
    std::lock_guard lock(mu_);
    ++runs_epoch_;
    metrics_cache_.erase({project_id, run.pipeline_yaml_hash});
}

bool Twin::wait_idle(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::unique_lock lock(progress_mu_);
    for (;;) {
        bool idle = true;
        for (auto t : kConsumed) {
            if (handled_[t] < bus_.last_sequence(t)) idle = false;
        }
        if (idle) return true;
        if (workers_.empty() || std::chrono::steady_clock::now() >= deadline) return false;
        progress_cv_.wait_for(lock, std::chrono::milliseconds(10));
    }
}

void Twin::record_error(Topic topic, std::uint64_t sequence, const std::string& message) {
    std::lock_guard lock(mu_);
    errors_.push_back(json{{"topic", to_string(topic)}, {"sequence", sequence}, {"message", message}});
    while (errors_.size() > options_.max_recorded_errors) errors_.pop_front();
}

json Twin::status() const {
    json topics = json::object();
    {
        std::lock_guard lock(progress_mu_);
        for (auto t : kAllTopics) {
            json entry{{"last_sequence", bus_.last_sequence(t)}};
            if (auto it = handled_.find(t); it != handled_.end()) entry["handled"] = it->second;
            if (auto it = processed_count_.find(t); it != processed_count_.end()) entry["processed"] = it->second;
            topics[std::string(to_string(t))] = entry;
        }
    }
    std::lock_guard lock(mu_);
    return json{{"running", !workers_.empty()},
                {"generation_count", generations_.load()},
                {"topics", topics},
                {"errors", json(errors_)}};
}

std::vector<VersionInfo> Twin::versions(const std::string& project_id) const {
    std::vector<VersionInfo> out;
    const auto prefix = "version/" + keys::encode_project(project_id) + "/";
    for (const auto& key : store_.keys(Namespace::operational, prefix)) {
        if (auto j = store_.get(Namespace::operational, key, kVersionSchema)) out.push_back(version_from_json(*j));
    }
    std::sort(out.begin(), out.end(), [](const VersionInfo& a, const VersionInfo& b) {
        return std::tie(a.first_seen, a.yaml_hash) < std::tie(b.first_seen, b.yaml_hash);
    });
    return out;
}

std::optional<Pipeline> Twin::model(const std::string& project_id, const std::string& yaml_hash) const {
    auto j = store_.get(Namespace::operational, keys::model(project_id, yaml_hash), kModelSchema);
    if (!j) return std::nullopt;
    return model_from_json(*j);
}

std::optional<bpmn::BpmnDocument> Twin::bpmn(const std::string& project_id, const std::string& yaml_hash) const {
    auto j = store_.get(Namespace::analytical, keys::bpmn(project_id, yaml_hash), kBpmnSchema);
    if (!j) return std::nullopt;
    return bpmn_from_json(*j);
}

std::vector<PipelineRun> Twin::runs(const std::string& project_id,
                                    const std::optional<std::string>& yaml_hash) const {
    std::vector<PipelineRun> out;
    const auto prefix = "run/" + keys::encode_project(project_id) + "/";
    for (const auto& key : store_.keys(Namespace::operational, prefix)) {
        auto j = store_.get(Namespace::operational, key, kRunSchema);
        if (!j) continue;
        auto r = run_from_json(*j);
        if (!yaml_hash || r.pipeline_yaml_hash == *yaml_hash) out.push_back(std::move(r));
    }
    std::sort(out.begin(), out.end(),
              [](const PipelineRun& a, const PipelineRun& b) { return run_id_less(a.run_id, b.run_id); });
    return out;
}

std::optional<PipelineRun> Twin::run(const std::string& project_id, const std::string& run_id) const {
    auto j = store_.get(Namespace::operational, keys::run(project_id, run_id), kRunSchema);
    if (!j) return std::nullopt;
    return run_from_json(*j);
}

std::optional<analytics::VersionMetrics> Twin::metrics(const std::string& project_id, const std::string& yaml_hash) {
    std::uint64_t epoch = 0;
    {
        std::lock_guard lock(mu_);
        if (auto it = metrics_cache_.find({project_id, yaml_hash}); it != metrics_cache_.end()) return it->second;
        epoch = runs_epoch_;
    }
    auto m = model(project_id, yaml_hash);
    if (!m) return std::nullopt;
    auto rs = runs(project_id, yaml_hash);
    auto result = analytics::aggregate(rs, *m);
    std::lock_guard lock(mu_);
    if (runs_epoch_ == epoch) metrics_cache_[{project_id, yaml_hash}] = result;
    return result;
}

} // namespace pipetwin::twin
