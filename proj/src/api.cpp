#include "pipetwin/api.hpp"

#include "pipetwin/diff.hpp"
#include "pipetwin/model_json.hpp"

#include <httplib.h>

#include <charconv>
#include <regex>

namespace pipetwin::api {

using nlohmann::json;

json ApiError::to_json() const { return json{{"status", status}, {"code", code}, {"message", message}}; }

HttpError::HttpError(int status, std::string code, const std::string& message)
    : Error(message), error_{status, std::move(code), message} {}

namespace {

constexpr const char* kJson = "application/json";

void send_error(httplib::Response& res, const ApiError& e) {
    res.status = e.status;
    res.set_content(e.to_json().dump(), kJson);
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

std::string default_code(int status) {
    switch (status) {
    case 400: return "bad_request";
    case 404: return "not_found";
    case 405: return "method_not_allowed";
    case 409: return "conflict";
    case 413: return "payload_too_large";
    case 414: return "uri_too_long";
    case 416: return "range_not_satisfiable";
    case 422: return "invalid_query";
    case 502: return "forge_unreachable";
    default: return status >= 500 ? "internal" : "error";
    }
}

const std::string& require_hash(const std::string& h, const char* what) {
    static const std::regex re("^[0-9a-f]{64}$");
    if (!std::regex_match(h, re))
        throw HttpError(422, "invalid_hash", std::string(what) + " must be a full 64-character lowercase hex hash");
    return h;
}

std::string query(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) throw HttpError(422, "invalid_query", std::string("missing query parameter '") + key + "'");
    return req.get_param_value(key);
}

std::optional<int> positive_int(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    const auto s = req.get_param_value(key);
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || v <= 0)
        throw HttpError(422, "invalid_query", std::string("'") + key + "' must be a positive integer");
    return v;
}

json version_row(const twin::VersionInfo& v) {
    auto j = twin::to_json(v);
    j.erase("schema");
    return j;
}

} // namespace

struct Server::Impl {
    twin::Twin& twin;
    ServerOptions options;
    httplib::Server http;

    Impl(twin::Twin& t, ServerOptions o) : twin(t), options(o) {}

    using Handler = std::function<void(const httplib::Request&, httplib::Response&, const std::smatch&)>;

    httplib::Server::Handler wrap(const std::string& pattern, Handler fn) {
        auto re = std::make_shared<std::regex>(pattern);
        return [fn = std::move(fn), re](const httplib::Request& req, httplib::Response& res) {
            std::smatch m;
            std::regex_match(req.path, m, *re);
            try {
                fn(req, res, m);
            } catch (const HttpError& e) {
                send_error(res, e.error());
            } catch (const twin::UnknownProject& e) {
                send_error(res, {404, "unknown_project", e.what()});
            } catch (const forge::InvalidHandle& e) {
                send_error(res, {422, "invalid_handle", e.what()});
            } catch (const forge::ForgeError& e) {
                send_error(res, {502, "forge_" + std::string(to_string(e.kind())), e.what()});
            } catch (const twin::Corrupt& e) {
                send_error(res, {500, "store_corrupt", e.what()});
            } catch (const std::exception& e) {
                send_error(res, {500, "internal", e.what()});
            }
        };
    }

    void get(const std::string& pattern, Handler fn) { http.Get(pattern, wrap(pattern, std::move(fn))); }
    void post(const std::string& pattern, Handler fn) { http.Post(pattern, wrap(pattern, std::move(fn))); }

    forge::ProjectHandle require_project(const std::string& id) const {
        auto h = twin.project(id);
        if (!h) throw HttpError(404, "unknown_project", "unknown project '" + id + "'");
        return *h;
    }

    Pipeline require_version(const std::string& project_id, const std::string& hash) const {
        require_hash(hash, "hash");
        auto m = twin.model(project_id, hash);
        if (!m) throw HttpError(404, "unknown_version", "unknown version " + hash + " in project '" + project_id + "'");
        return *m;
    }

    /// 409 when the hash is only known to another project.
    Pipeline require_comparable(const std::string& project_id, const std::string& hash) const {
        require_hash(hash, "hash");
        if (auto m = twin.model(project_id, hash)) return *m;
        for (const auto& p : twin.projects()) {
            if (p.project_id != project_id && twin.model(p.project_id, hash))
                throw HttpError(409, "cross_project",
                                "version " + hash + " belongs to project '" + p.project_id + "', not '" + project_id +
                                    "'");
        }
        throw HttpError(404, "unknown_version", "unknown version " + hash + " in project '" + project_id + "'");
    }

    void routes() {
        const std::string P = "/api/v1/projects/(.+)";
        const std::string H = "([^/]+)";

        get("/api/v1/health", [this](const auto&, auto& res, const auto&) {
            auto st = twin.status();
            send_json(res, json{{"status", "ok"},
                                {"version", kVersion},
                                {"build", {{"compiler", __VERSION__}, {"cplusplus", __cplusplus}}},
                                {"twin", {{"running", st.at("running")}, {"generation_count", st.at("generation_count")},
                                          {"topics", st.at("topics")}, {"errors", st.at("errors").size()}}}});
        });

        get("/api/v1/projects", [this](const auto&, auto& res, const auto&) {
            json out = json::array();
            for (const auto& h : twin.projects()) out.push_back(forge::to_json(h));
            send_json(res, out);
        });

        post("/api/v1/projects", [this](const auto& req, auto& res, const auto&) {
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::exception& e) {
                throw HttpError(422, "invalid_body", std::string("request body is not JSON: ") + e.what());
            }
            if (!body.is_object()) throw HttpError(422, "invalid_body", "request body must be an object");
            auto h = forge::handle_from_json(body);
            if (body.contains("token") && body.at("token").is_string()) h.token = body.at("token").get<std::string>();
            twin.register_project(h);
            send_json(res, forge::to_json(h), 201);
        });

        post(P + "/sync", [this](const auto& req, auto& res, const auto& m) {
            const std::string id = m[1];
            require_project(id);
            forge::VersionQuery vq;
            vq.limit = positive_int(req, "limit");
            forge::RunQuery rq;
            rq.limit = positive_int(req, "runs");
            const auto before = twin.versions(id).size();
            auto report = twin.sync(id, vq, rq);
            const bool idle = twin.wait_idle(options.sync_timeout);
            auto versions = twin.versions(id);
            json rows = json::array();
            for (const auto& v : versions) rows.push_back(version_row(v));
            auto body = twin::to_json(report);
            body["complete"] = idle;
            body["new_versions"] = versions.size() - std::min(before, versions.size());
            body["versions"] = rows;
            send_json(res, body);
        });

        get(P + "/versions", [this](const auto&, auto& res, const auto& m) {
            const std::string id = m[1];
            require_project(id);
            json rows = json::array();
            for (const auto& v : twin.versions(id)) rows.push_back(version_row(v));
            send_json(res, rows);
        });

        get(P + "/versions/" + H + "/bpmn", [this](const auto&, auto& res, const auto& m) {
            const std::string id = m[1], hash = m[2];
            require_project(id);
            require_version(id, hash);
            auto doc = twin.bpmn(id, hash);
            if (!doc) throw HttpError(404, "bpmn_unavailable", "no BPMN document for version " + hash);
            res.set_content(doc->xml, "application/xml");
        });

        get(P + "/versions/" + H + "/model", [this](const auto&, auto& res, const auto& m) {
            const std::string id = m[1], hash = m[2];
            require_project(id);
            send_json(res, model_to_json(require_version(id, hash)));
        });

        get(P + "/versions/" + H + "/metrics", [this](const auto&, auto& res, const auto& m) {
            const std::string id = m[1], hash = m[2];
            require_project(id);
            require_version(id, hash);
            send_json(res, analytics::to_json(*twin.metrics(id, hash)));
        });

        get(P + "/metrics/delta", [this](const auto& req, auto& res, const auto& m) {
            const std::string id = m[1];
            require_project(id);
            const auto from = query(req, "from"), to = query(req, "to");
            require_hash(from, "from");
            require_hash(to, "to");
            require_comparable(id, from);
            require_comparable(id, to);
            send_json(res, analytics::to_json(analytics::delta(*twin.metrics(id, from), *twin.metrics(id, to))));
        });

        get(P + "/diff", [this](const auto& req, auto& res, const auto& m) {
            const std::string id = m[1];
            require_project(id);
            const auto from = query(req, "from"), to = query(req, "to");
            require_hash(from, "from");
            require_hash(to, "to");
            auto v1 = require_comparable(id, from);
            auto v2 = require_comparable(id, to);
            auto d = diff::diff(v1, v2);
            auto body = diff::to_json(d);
            auto b1 = twin.bpmn(id, from), b2 = twin.bpmn(id, to);
            if (b1 && b2) {
                auto [o1, o2] = diff::project(d, *b1, *b2);
                body["overlays"] = {{"from", diff::to_json(o1)}, {"to", diff::to_json(o2)}};
            } else {
                body["overlays"] = nullptr;
            }
            send_json(res, body);
        });

        get(P + "/runs", [this](const auto& req, auto& res, const auto& m) {
            const std::string id = m[1];
            require_project(id);
            std::optional<std::string> hash;
            if (req.has_param("hash")) hash = require_hash(req.get_param_value("hash"), "hash");
            json out = json::array();
            for (const auto& r : twin.runs(id, hash)) out.push_back(run_to_json(r));
            send_json(res, out);
        });

        get(P + "/runs/" + H + "/overlay", [this](const auto&, auto& res, const auto& m) {
            const std::string id = m[1], run_id = m[2];
            require_project(id);
            auto r = twin.run(id, run_id);
            if (!r) throw HttpError(404, "unknown_run", "unknown run '" + run_id + "'");
            auto doc = twin.bpmn(id, r->pipeline_yaml_hash);
            if (!doc)
                throw HttpError(404, "unknown_version", "no BPMN document for version " + r->pipeline_yaml_hash);
            try {
                send_json(res, analytics::to_json(analytics::overlay(*r, *doc)));
            } catch (const bpmn::MissingElement& e) {
                throw HttpError(409, "run_model_mismatch", e.what());
            }
        });

        http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (!res.body.empty() && res.get_header_value("Content-Type") == kJson) return;
            std::string msg = res.status == 404 ? "no route for " + req.method + " " + req.path
                                                : std::string(httplib::status_message(res.status));
            send_error(res, {res.status, default_code(res.status), msg});
        });
        http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string msg = "internal error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                msg = e.what();
            } catch (...) {
            }
            send_error(res, {500, "internal", msg});
        });
    }
};

Server::Server(twin::Twin& twin, ServerOptions options) : impl_(std::make_unique<Impl>(twin, options)) {
    impl_->routes();
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
    if (port == 0) return impl_->http.bind_to_any_port(host);
    return impl_->http.bind_to_port(host, port) ? port : -1;
}

bool Server::listen() { return impl_->http.listen_after_bind(); }

void Server::stop() {
    if (impl_->http.is_running()) impl_->http.stop();
}

bool Server::running() const { return impl_->http.is_running(); }

} // namespace pipetwin::api
