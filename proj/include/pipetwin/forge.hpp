#pragma once

// GitLab REST v4 acquisition: configuration history, pipeline runs and
// change polling. Only GET requests are ever issued.

#include "pipetwin/model.hpp"
#include "pipetwin/parser.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

namespace pipetwin::forge {

/// `ref` empty means the project's default branch. The token is never
/// serialized.
struct ProjectHandle {
    std::string base_url;
    std::string project_id;
    std::optional<std::string> token;
    std::string ci_file_path = ".gitlab-ci.yml";
    std::string ref;
};

nlohmann::json to_json(const ProjectHandle& h);
/// Reads base_url, project_id, ci_file_path and ref; a "token" key is ignored.
ProjectHandle handle_from_json(const nlohmann::json& j);

/// Throws InvalidHandle unless base_url is https, or http on a loopback host.
void check_handle(const ProjectHandle& h);

class InvalidHandle : public Error {
public:
    using Error::Error;
};

enum class ForgeErrorKind { auth_failed, not_found, rate_limited, transport };

std::string_view to_string(ForgeErrorKind k);

class ForgeError : public Error {
public:
    ForgeError(ForgeErrorKind kind, const std::string& message, int http_status = 0,
               std::optional<std::chrono::seconds> retry_after = std::nullopt);

    ForgeErrorKind kind() const { return kind_; }
    int http_status() const { return http_status_; }
    std::optional<std::chrono::seconds> retry_after() const { return retry_after_; }

private:
    ForgeErrorKind kind_;
    int http_status_;
    std::optional<std::chrono::seconds> retry_after_;
};

struct ConfigSnapshot {
    RawConfig raw;
    Timestamp committed_at;
    Timestamp fetched_at;
};

nlohmann::json to_json(const ConfigSnapshot& s);
ConfigSnapshot snapshot_from_json(const nlohmann::json& j);

struct VersionQuery {
    std::optional<int> limit;
    std::optional<Timestamp> since;
    std::optional<Timestamp> until;
};

struct RunQuery {
    std::optional<std::string> ref;
    std::optional<std::string> sha;
    std::optional<int> limit;
};

/// A platform record that does not map onto the metamodel.
struct MappingRejected {
    std::string run_id;
    std::string reason;

    bool operator==(const MappingRejected&) const = default;
};

struct RunBatch {
    std::vector<PipelineRun> runs;
    std::vector<MappingRejected> rejected;
};

std::optional<ExecutionStatus> map_status(std::string_view gitlab_status);
/// `tag` distinguishes tag pushes from branch pushes.
std::optional<TriggerType> map_source(std::string_view gitlab_source, bool tag = false);

struct ClientOptions {
    int per_page = 100;
    std::chrono::seconds timeout{30};
    std::function<Timestamp()> clock;
};

class GitLabClient {
public:
    explicit GitLabClient(ProjectHandle handle, ClientOptions options = {});
    ~GitLabClient();

    GitLabClient(const GitLabClient&) = delete;
    GitLabClient& operator=(const GitLabClient&) = delete;

    const ProjectHandle& handle() const { return handle_; }

    /// handle.ref, or the project's default branch.
    std::string resolve_ref();

    /// Commits touching ci_file_path on the ref, newest first, with the file
    /// content at each. Equal contents are not collapsed.
    std::vector<ConfigSnapshot> list_config_versions(const VersionQuery& q = {});

    /// The newest commit touching ci_file_path, or nullopt if none.
    std::optional<ConfigSnapshot> latest_snapshot();

    /// Raw file bytes at a commit; cached per sha.
    std::string file_at(const std::string& sha);

    RunBatch fetch_runs(const RunQuery& q = {});

    std::size_t request_count() const;

private:
    struct Response {
        std::string body;
        std::map<std::string, std::string> headers;
    };

    Response get(const std::string& path, const std::vector<std::pair<std::string, std::string>>& params,
                 const std::string& what);
    nlohmann::json get_json(const std::string& path, const std::vector<std::pair<std::string, std::string>>& params,
                            const std::string& what, std::map<std::string, std::string>* headers = nullptr);
    std::vector<nlohmann::json> get_paged(const std::string& path,
                                          std::vector<std::pair<std::string, std::string>> params,
                                          const std::string& what, std::optional<int> limit);
    std::string project_path() const;
    Timestamp now() const;

    ProjectHandle handle_;
    ClientOptions options_;
    std::string origin_;
    std::string prefix_;
    mutable std::mutex mu_;
    std::map<std::string, std::string> file_cache_;
    std::optional<std::string> resolved_ref_;
    std::size_t requests_ = 0;
};

/// Polls the newest commit touching the CI file and reports a snapshot only
/// when its content hash differs from the last one seen.
class ChangeTracker {
public:
    explicit ChangeTracker(GitLabClient& client, std::optional<std::string> last_seen_hash = std::nullopt);

    std::optional<ConfigSnapshot> poll();

    /// Polls every `interval` until stop is requested. Transport and rate
    /// limit errors back off (1 s doubling, capped at 5 min, or the server's
    /// Retry-After); auth and not-found errors end the loop by rethrowing.
    void run(std::chrono::milliseconds interval, const std::function<void(const ConfigSnapshot&)>& on_change,
             std::stop_token stop);

    static std::chrono::milliseconds backoff(int attempt);

    const std::optional<std::string>& last_seen_hash() const { return last_hash_; }

private:
    GitLabClient& client_;
    std::optional<std::string> last_hash_;
};

} // namespace pipetwin::forge
