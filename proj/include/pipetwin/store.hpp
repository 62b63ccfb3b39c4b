#pragma once

// Embedded key/value store: one SQLite file, one table per namespace.
//
//   table        key                              value schema
//   operational  project/<project_id>             pipetwin.project/1
//   operational  model/<project_id>/<yaml_hash>   pipetwin.model/1
//   operational  version/<project_id>/<yaml_hash> pipetwin.version/1
//   operational  run/<project_id>/<run_id>        pipetwin.run/1
//   operational  failure/<project_id>/<yaml_hash> pipetwin.failure/1
//   analytical   bpmn/<project_id>/<yaml_hash>    pipetwin.bpmn/1
//
// Values are JSON text carrying a "schema" field. Project ids are stored
// percent-encoded so they never contain '/'.

#include "pipetwin/model.hpp"

#include <nlohmann/json.hpp>

#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

struct sqlite3;

namespace pipetwin::twin {

enum class Namespace { operational, analytical };

std::string_view to_string(Namespace ns);

class StoreError : public Error {
public:
    using Error::Error;
};

/// Stored bytes that are not JSON or carry the wrong schema.
class Corrupt : public StoreError {
public:
    using StoreError::StoreError;
};

namespace keys {
std::string encode_project(std::string_view project_id);
std::string project(std::string_view project_id);
std::string model(std::string_view project_id, std::string_view yaml_hash);
std::string version(std::string_view project_id, std::string_view yaml_hash);
std::string run(std::string_view project_id, std::string_view run_id);
std::string failure(std::string_view project_id, std::string_view yaml_hash);
std::string bpmn(std::string_view project_id, std::string_view yaml_hash);
} // namespace keys

class Store {
public:
    /// ":memory:" opens a private in-memory database.
    explicit Store(const std::string& path = ":memory:");
    ~Store();

    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    /// Last write wins. Throws StoreError if `value` has no "schema" string.
    void put(Namespace ns, const std::string& key, const nlohmann::json& value);

    /// nullopt when absent. Throws Corrupt on unparsable bytes, or when
    /// `expected_schema` is given and differs.
    std::optional<nlohmann::json> get(Namespace ns, const std::string& key,
                                      std::optional<std::string_view> expected_schema = std::nullopt) const;

    bool contains(Namespace ns, const std::string& key) const;
    bool erase(Namespace ns, const std::string& key);

    /// Keys starting with `prefix`, sorted.
    std::vector<std::string> keys(Namespace ns, const std::string& prefix = "") const;
    std::size_t count(Namespace ns, const std::string& prefix = "") const;

    /// Writes bytes verbatim, bypassing the schema check.
    void put_raw(Namespace ns, const std::string& key, const std::string& bytes);

    /// Every row of both namespaces, sorted; for comparing store states.
    std::string dump() const;

private:
    void exec(const char* sql) const;

    sqlite3* db_ = nullptr;
    mutable std::mutex mu_;
};

} // namespace pipetwin::twin
