#pragma once

// Orchestration: snapshots and runs flow in over the bus, get parsed,
// generated and stored; queries read the stores.

#include "pipetwin/analytics.hpp"
#include "pipetwin/bpmn.hpp"
#include "pipetwin/bus.hpp"
#include "pipetwin/forge.hpp"
#include "pipetwin/store.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace pipetwin::twin {

inline constexpr std::string_view kProjectSchema = "pipetwin.project/1";
inline constexpr std::string_view kVersionSchema = "pipetwin.version/1";
inline constexpr std::string_view kBpmnSchema = "pipetwin.bpmn/1";
inline constexpr std::string_view kFailureSchema = "pipetwin.failure/1";

/// One structural version. first_seen and commit_sha come from the earliest
/// commit carrying this content.
struct VersionInfo {
    std::string yaml_hash;
    std::string commit_sha;
    std::string ref;
    Timestamp first_seen;
    int job_count = 0;

    bool operator==(const VersionInfo&) const = default;
};

nlohmann::json to_json(const VersionInfo& v);
VersionInfo version_from_json(const nlohmann::json& j);

nlohmann::json bpmn_to_json(const std::string& yaml_hash, const bpmn::BpmnDocument& doc);
bpmn::BpmnDocument bpmn_from_json(const nlohmann::json& j);

class UnknownProject : public Error {
public:
    using Error::Error;
};

using ClientFactory = std::function<std::unique_ptr<forge::GitLabClient>(const forge::ProjectHandle&)>;

struct TwinOptions {
    ClientFactory client_factory;
    bpmn::LayoutConfig layout;
    std::size_t max_recorded_errors = 100;
};

struct SyncReport {
    int snapshots = 0;
    int runs = 0;
    std::vector<forge::MappingRejected> rejected;
};

nlohmann::json to_json(const SyncReport& r);

class Twin {
public:
    Twin(Store& store, Bus& bus, TwinOptions options = {});
    ~Twin();

    Twin(const Twin&) = delete;
    Twin& operator=(const Twin&) = delete;

    /// Subscribes the workers (one per consumed topic). Envelopes published
    /// before start are not seen.
    void start();
    void stop();

    /// Stores the handle without its token; the token is kept in memory.
    void register_project(const forge::ProjectHandle& handle);
    std::vector<forge::ProjectHandle> projects() const;
    std::optional<forge::ProjectHandle> project(const std::string& project_id) const;

    /// Acquires configuration history and runs and publishes them. Serialized
    /// per project. Throws UnknownProject or forge::ForgeError.
    SyncReport sync(const std::string& project_id, const forge::VersionQuery& versions = {},
                    const forge::RunQuery& runs = {});

    /// One change-tracking poll; publishes ChangeDetection when the file's
    /// content hash changed since the last sync or poll.
    bool poll_changes(const std::string& project_id);

    /// Background polling per registered project until stop().
    void start_tracking(std::chrono::milliseconds interval);

    /// Handlers behind the workers; callable directly.
    void ingest_snapshot(const std::string& project_id, const forge::ConfigSnapshot& snapshot);
    void ingest_run(const std::string& project_id, const PipelineRun& run);

    /// Blocks until every envelope published on a consumed topic since
    /// start() has been handled. false on timeout.
    bool wait_idle(std::chrono::milliseconds timeout = std::chrono::seconds(30));

    std::size_t generation_count() const { return generations_.load(); }
    nlohmann::json status() const;

    std::vector<VersionInfo> versions(const std::string& project_id) const;
    std::optional<Pipeline> model(const std::string& project_id, const std::string& yaml_hash) const;
    std::optional<bpmn::BpmnDocument> bpmn(const std::string& project_id, const std::string& yaml_hash) const;
    /// Runs sorted by run id (numeric ids numerically); filtered by hash when given.
    std::vector<PipelineRun> runs(const std::string& project_id,
                                  const std::optional<std::string>& yaml_hash = std::nullopt) const;
    std::optional<PipelineRun> run(const std::string& project_id, const std::string& run_id) const;
    /// nullopt when the version is unknown. Cached until a run for the
    /// version arrives.
    std::optional<analytics::VersionMetrics> metrics(const std::string& project_id, const std::string& yaml_hash);

private:
    struct Worker;

    void record_error(Topic topic, std::uint64_t sequence, const std::string& message);
    void handle(const Envelope& e);
    std::unique_ptr<forge::GitLabClient> client_for(const std::string& project_id) const;
    std::mutex& project_mutex(const std::string& project_id);

    Store& store_;
    Bus& bus_;
    TwinOptions options_;

    mutable std::mutex mu_;
    std::map<std::string, std::string> tokens_;
    std::map<std::string, std::unique_ptr<std::mutex>> project_mu_;
    std::map<std::string, std::optional<std::string>> last_seen_hash_;
    std::map<std::pair<std::string, std::string>, analytics::VersionMetrics> metrics_cache_;
    /// Bumped by ingest_run; a metrics result computed across a bump is not cached.
    std::uint64_t runs_epoch_ = 0;
    std::deque<nlohmann::json> errors_;

    std::mutex ingest_mu_;
    std::atomic<std::size_t> generations_{0};

    mutable std::mutex progress_mu_;
    std::condition_variable progress_cv_;
    std::map<Topic, std::uint64_t> handled_;
    std::map<Topic, std::uint64_t> processed_count_;

    std::vector<std::unique_ptr<Worker>> workers_;
    std::vector<std::jthread> trackers_;
};

} // namespace pipetwin::twin
