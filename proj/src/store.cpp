#include "pipetwin/store.hpp"

#include <sqlite3.h>

#include <memory>

namespace pipetwin::twin {

using nlohmann::json;

namespace {

const char* table(Namespace ns) { return ns == Namespace::operational ? "operational" : "analytical"; }

struct StmtDeleter {
    void operator()(sqlite3_stmt* s) const { sqlite3_finalize(s); }
};
using Stmt = std::unique_ptr<sqlite3_stmt, StmtDeleter>;

Stmt prepare(sqlite3* db, const std::string& sql) {
    sqlite3_stmt* s = nullptr;
    if (sqlite3_prepare_v2(db, sql.c_str(), -1, &s, nullptr) != SQLITE_OK)
        throw StoreError(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    return Stmt(s);
}

void bind(sqlite3_stmt* s, int i, const std::string& v) {
    sqlite3_bind_text(s, i, v.data(), int(v.size()), SQLITE_TRANSIENT);
}

std::string column(sqlite3_stmt* s, int i) {
    const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(s, i));
    return p ? std::string(p, std::size_t(sqlite3_column_bytes(s, i))) : std::string();
}

std::string join_key(std::string_view kind, std::string_view project, std::string_view id) {
    std::string out(kind);
    out += '/';
    out += keys::encode_project(project);
    out += '/';
    out += id;
    return out;
}

} // namespace

std::string_view to_string(Namespace ns) { return table(ns); }

namespace keys {

std::string encode_project(std::string_view id) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : id) {
        const bool plain = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                           c == '_' || c == '.' || c == '~';
        if (plain) {
            out += char(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

std::string project(std::string_view project_id) { return "project/" + encode_project(project_id); }
std::string model(std::string_view p, std::string_view h) { return join_key("model", p, h); }
std::string version(std::string_view p, std::string_view h) { return join_key("version", p, h); }
std::string run(std::string_view p, std::string_view r) { return join_key("run", p, r); }
std::string failure(std::string_view p, std::string_view h) { return join_key("failure", p, h); }
std::string bpmn(std::string_view p, std::string_view h) { return join_key("bpmn", p, h); }

} // namespace keys

Store::Store(const std::string& path) {
    if (sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                        nullptr) != SQLITE_OK) {
        std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        throw StoreError("cannot open store '" + path + "': " + msg);
    }
    sqlite3_busy_timeout(db_, 5000);
    exec("CREATE TABLE IF NOT EXISTS operational (key TEXT PRIMARY KEY, value TEXT NOT NULL)");
    exec("CREATE TABLE IF NOT EXISTS analytical (key TEXT PRIMARY KEY, value TEXT NOT NULL)");
}

Store::~Store() { sqlite3_close(db_); }

void Store::exec(const char* sql) const {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown error";
        sqlite3_free(err);
        throw StoreError("sqlite: " + msg);
    }
}

void Store::put(Namespace ns, const std::string& key, const json& value) {
    if (!value.is_object() || !value.contains("schema") || !value.at("schema").is_string())
        throw StoreError("value for '" + key + "' has no schema id");
    put_raw(ns, key, value.dump());
}

void Store::put_raw(Namespace ns, const std::string& key, const std::string& bytes) {
    std::lock_guard lock(mu_);
    auto s = prepare(db_, std::string("INSERT OR REPLACE INTO ") + table(ns) + " (key, value) VALUES (?, ?)");
    bind(s.get(), 1, key);
    bind(s.get(), 2, bytes);
    if (sqlite3_step(s.get()) != SQLITE_DONE) throw StoreError(std::string("sqlite put: ") + sqlite3_errmsg(db_));
}

std::optional<json> Store::get(Namespace ns, const std::string& key,
                               std::optional<std::string_view> expected_schema) const {
    std::string bytes;
    {
        std::lock_guard lock(mu_);
        auto s = prepare(db_, std::string("SELECT value FROM ") + table(ns) + " WHERE key = ?");
        bind(s.get(), 1, key);
        const int rc = sqlite3_step(s.get());
        if (rc == SQLITE_DONE) return std::nullopt;
        if (rc != SQLITE_ROW) throw StoreError(std::string("sqlite get: ") + sqlite3_errmsg(db_));
        bytes = column(s.get(), 0);
    }
    json value;
    try {
        value = json::parse(bytes);
    } catch (const json::exception& e) {
        throw Corrupt("'" + key + "' is not valid JSON: " + e.what());
    }
    if (!value.is_object() || !value.contains("schema") || !value.at("schema").is_string())
        throw Corrupt("'" + key + "' has no schema id");
    if (expected_schema && value.at("schema").get<std::string>() != *expected_schema)
        throw Corrupt("'" + key + "' has schema '" + value.at("schema").get<std::string>() + "', expected '" +
                      std::string(*expected_schema) + "'");
    return value;
}

bool Store::contains(Namespace ns, const std::string& key) const {
    std::lock_guard lock(mu_);
    auto s = prepare(db_, std::string("SELECT 1 FROM ") + table(ns) + " WHERE key = ?");
    bind(s.get(), 1, key);
    return sqlite3_step(s.get()) == SQLITE_ROW;
}

bool Store::erase(Namespace ns, const std::string& key) {
    std::lock_guard lock(mu_);
    auto s = prepare(db_, std::string("DELETE FROM ") + table(ns) + " WHERE key = ?");
    bind(s.get(), 1, key);
    if (sqlite3_step(s.get()) != SQLITE_DONE) throw StoreError(std::string("sqlite erase: ") + sqlite3_errmsg(db_));
    return sqlite3_changes(db_) > 0;
}

std::vector<std::string> Store::keys(Namespace ns, const std::string& prefix) const {
    std::lock_guard lock(mu_);
    auto s = prepare(db_, std::string("SELECT key FROM ") + table(ns) +
                              " WHERE substr(key, 1, length(?1)) = ?1 ORDER BY key");
    bind(s.get(), 1, prefix);
    std::vector<std::string> out;
    while (sqlite3_step(s.get()) == SQLITE_ROW) out.push_back(column(s.get(), 0));
    return out;
}

std::size_t Store::count(Namespace ns, const std::string& prefix) const { return keys(ns, prefix).size(); }

std::string Store::dump() const {
    std::string out;
    for (auto ns : {Namespace::operational, Namespace::analytical}) {
        std::lock_guard lock(mu_);
        auto s = prepare(db_, std::string("SELECT key, value FROM ") + table(ns) + " ORDER BY key");
        while (sqlite3_step(s.get()) == SQLITE_ROW) {
            out += table(ns);
            out += '\t';
            out += column(s.get(), 0);
            out += '\t';
            out += column(s.get(), 1);
            out += '\n';
        }
    }
    return out;
}

} // namespace pipetwin::twin
