#include "mock_forge.hpp"

#include <httplib.h>

#include <algorithm>
#include <regex>
#include <thread>

namespace mock {

using nlohmann::json;

struct Forge::Impl {
    std::string project_id;
    std::string default_branch;
    httplib::Server http;
    std::thread thread;
    int port = 0;

    mutable std::mutex mu;
    std::optional<std::string> token;
    std::vector<Commit> commits;
    std::optional<std::size_t> visible;
    std::vector<Pipeline> pipelines;
    struct Failure {
        std::string needle;
        int status;
        int remaining;
        std::optional<int> retry_after;
    };
    std::vector<Failure> failures;
    bool omit_next_page = false;
    int max_per_page = 100;
    std::vector<Request> log;

    std::vector<Commit> visible_commits() const {
        auto n = visible ? std::min(*visible, commits.size()) : commits.size();
        return {commits.begin(), commits.begin() + long(n)};
    }

    void page(const httplib::Request& req, httplib::Response& res, const std::vector<json>& items) const {
        int per_page = 20, page = 1;
        if (req.has_param("per_page")) per_page = std::stoi(req.get_param_value("per_page"));
        if (req.has_param("page")) page = std::stoi(req.get_param_value("page"));
        per_page = std::clamp(per_page, 1, max_per_page);
        page = std::max(page, 1);
        const std::size_t begin = std::size_t(page - 1) * std::size_t(per_page);
        json out = json::array();
        for (std::size_t i = begin; i < items.size() && i < begin + std::size_t(per_page); ++i) out.push_back(items[i]);
        res.set_header("X-Page", std::to_string(page));
        res.set_header("X-Per-Page", std::to_string(per_page));
        res.set_header("X-Total", std::to_string(items.size()));
        if (!omit_next_page) {
            const bool more = begin + std::size_t(per_page) < items.size();
            res.set_header("X-Next-Page", more ? std::to_string(page + 1) : "");
        }
        res.set_content(out.dump(), "application/json");
    }

    static void not_found(httplib::Response& res, const std::string& what) {
        res.status = 404;
        res.set_content(json{{"message", "404 " + what + " Not Found"}}.dump(), "application/json");
    }

    static json pipeline_summary(const Pipeline& p) {
        return json{{"id", p.id}, {"sha", p.sha}, {"ref", p.ref}, {"status", p.status}, {"source", p.source}};
    }

    static json pipeline_detail(const Pipeline& p) {
        auto j = pipeline_summary(p);
        j["tag"] = p.tag;
        j["duration"] = p.duration ? json(*p.duration) : json(nullptr);
        j["started_at"] = p.started_at ? json(*p.started_at) : json(nullptr);
        j["finished_at"] = p.finished_at ? json(*p.finished_at) : json(nullptr);
        return j;
    }

    void serve(const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mu);
        Request r{req.method, req.path, {}, req.get_header_value("PRIVATE-TOKEN")};
        for (const auto& [k, v] : req.params) r.params[k] = v;
        log.push_back(r);

        if (req.method != "GET") {
            res.status = 405;
            return;
        }
        if (token && r.token != *token) {
            res.status = 401;
            res.set_content(R"({"message":"401 Unauthorized"})", "application/json");
            return;
        }
        for (auto& f : failures) {
            if (f.remaining > 0 && req.path.find(f.needle) != std::string::npos) {
                --f.remaining;
                res.status = f.status;
                if (f.retry_after) res.set_header("Retry-After", std::to_string(*f.retry_after));
                res.set_content(R"({"message":"injected"})", "application/json");
                return;
            }
        }

        const std::string prefix = "/api/v4/projects/" + project_id;
        if (req.path.rfind(prefix, 0) != 0) return not_found(res, "Project");
        const std::string rest = req.path.substr(prefix.size());
        std::smatch m;

        if (rest.empty()) {
            res.set_content(json{{"id", 1}, {"path_with_namespace", project_id}, {"default_branch", default_branch}}.dump(),
                            "application/json");
            return;
        }
        if (rest == "/repository/commits") {
            const auto path = req.get_param_value("path");
            const auto ref = req.has_param("ref_name") ? req.get_param_value("ref_name") : default_branch;
            if (ref != default_branch) return not_found(res, "Branch");
            std::vector<json> items;
            auto cs = visible_commits();
            for (auto it = cs.rbegin(); it != cs.rend(); ++it) {
                if (!path.empty() && !it->files.count(path)) continue;
                if (req.has_param("since") && it->committed_date < req.get_param_value("since")) continue;
                if (req.has_param("until") && it->committed_date > req.get_param_value("until")) continue;
                items.push_back(json{{"id", it->sha},
                                     {"short_id", it->sha.substr(0, 8)},
                                     {"committed_date", it->committed_date},
                                     {"created_at", it->committed_date},
                                     {"title", "commit " + it->sha.substr(0, 8)}});
            }
            return page(req, res, items);
        }
        static const std::regex file_re("^/repository/files/(.+)/raw$");
        if (std::regex_match(rest, m, file_re)) {
            const std::string path = m[1];
            const auto ref = req.get_param_value("ref");
            auto cs = visible_commits();
            const Commit* found = nullptr;
            if (ref == default_branch) {
                for (auto it = cs.rbegin(); it != cs.rend() && !found; ++it) {
                    if (it->files.count(path)) found = &*it;
                }
            } else {
                for (const auto& c : commits) {
                    if (c.sha == ref) found = &c;
                }
            }
            if (!found || !found->files.count(path)) return not_found(res, "File");
            res.set_content(found->files.at(path), "text/plain");
            return;
        }
        if (rest == "/pipelines") {
            std::vector<Pipeline> ps = pipelines;
            std::sort(ps.begin(), ps.end(), [](const Pipeline& a, const Pipeline& b) { return a.id > b.id; });
            std::vector<json> items;
            for (const auto& p : ps) {
                if (req.has_param("ref") && p.ref != req.get_param_value("ref")) continue;
                if (req.has_param("sha") && p.sha != req.get_param_value("sha")) continue;
                items.push_back(pipeline_summary(p));
            }
            return page(req, res, items);
        }
        static const std::regex detail_re("^/pipelines/(\\d+)$");
        static const std::regex jobs_re("^/pipelines/(\\d+)/jobs$");
        const bool is_detail = std::regex_match(rest, m, detail_re);
        if (is_detail || std::regex_match(rest, m, jobs_re)) {
            const long long id = std::stoll(m[1]);
            for (const auto& p : pipelines) {
                if (p.id != id) continue;
                if (is_detail) {
                    res.set_content(pipeline_detail(p).dump(), "application/json");
                    return;
                }
                return page(req, res, p.jobs);
            }
            return not_found(res, "Pipeline");
        }
        not_found(res, "Route");
    }
};

Forge::Forge(std::string project_id, std::string default_branch) : impl_(std::make_unique<Impl>()) {
    impl_->project_id = std::move(project_id);
    impl_->default_branch = std::move(default_branch);
    auto handler = [this](const httplib::Request& req, httplib::Response& res) { impl_->serve(req, res); };
    impl_->http.Get(".*", handler);
    impl_->http.Post(".*", handler);
    impl_->http.Put(".*", handler);
    impl_->http.Patch(".*", handler);
    impl_->http.Delete(".*", handler);
    impl_->port = impl_->http.bind_to_any_port("127.0.0.1");
    impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
}

Forge::~Forge() {
    impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::string Forge::base_url() const { return "http://127.0.0.1:" + std::to_string(impl_->port); }
int Forge::port() const { return impl_->port; }

void Forge::require_token(std::optional<std::string> token) {
    std::lock_guard lock(impl_->mu);
    impl_->token = std::move(token);
}

void Forge::add_commit(Commit c) {
    std::lock_guard lock(impl_->mu);
    impl_->commits.push_back(std::move(c));
}

void Forge::set_visible_commits(std::size_t n) {
    std::lock_guard lock(impl_->mu);
    impl_->visible = n;
}

std::size_t Forge::commit_count() const {
    std::lock_guard lock(impl_->mu);
    return impl_->commits.size();
}

void Forge::add_pipeline(Pipeline p) {
    std::lock_guard lock(impl_->mu);
    impl_->pipelines.push_back(std::move(p));
}

void Forge::fail(const std::string& needle, int status, int times, std::optional<int> retry_after) {
    std::lock_guard lock(impl_->mu);
    impl_->failures.push_back({needle, status, times, retry_after});
}

void Forge::omit_next_page_header(bool omit) {
    std::lock_guard lock(impl_->mu);
    impl_->omit_next_page = omit;
}

void Forge::max_per_page(int n) {
    std::lock_guard lock(impl_->mu);
    impl_->max_per_page = n;
}

std::vector<Request> Forge::requests() const {
    std::lock_guard lock(impl_->mu);
    return impl_->log;
}

std::size_t Forge::count_requests(const std::string& needle) const {
    std::lock_guard lock(impl_->mu);
    return std::size_t(std::count_if(impl_->log.begin(), impl_->log.end(),
                                     [&](const Request& r) { return r.path.find(needle) != std::string::npos; }));
}

std::size_t Forge::non_get_requests() const {
    std::lock_guard lock(impl_->mu);
    return std::size_t(
        std::count_if(impl_->log.begin(), impl_->log.end(), [](const Request& r) { return r.method != "GET"; }));
}

void Forge::clear_requests() {
    std::lock_guard lock(impl_->mu);
    impl_->log.clear();
}

} // namespace mock
