#include "pipetwin/api.hpp"
#include "pipetwin/bpmn.hpp"
#include "pipetwin/diff.hpp"
#include "pipetwin/model_json.hpp"
#include "pipetwin/parser.hpp"
#include "pipetwin/twin.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <unistd.h>

using namespace pipetwin;

namespace {

// Exit codes: 0 ok, 1 parse/validation/forge failure, 2 I/O, 3 differences.
constexpr int kOk = 0, kInvalid = 1, kIo = 2, kDifferent = 3;

struct IoError : Error {
    using Error::Error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("cannot read '" + path + "'");
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << bytes;
    out.close();
    if (!out) throw IoError("cannot write '" + path + "'");
}

RawConfig load_config(const std::string& path) {
    RawConfig raw;
    raw.raw_bytes = read_file(path);
    raw.provenance.file_path = std::filesystem::path(path).filename().string();
    return raw;
}

void print_violations(std::ostream& os, const std::vector<Violation>& vs) {
    for (const auto& v : vs) os << v.rule << " " << v.entity << ": " << v.message << "\n";
    os << vs.size() << (vs.size() == 1 ? " violation" : " violations") << "\n";
}

void print_parse_error(const ParseError& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    if (!e.violations().empty()) print_violations(std::cerr, e.violations());
}

int transform(const std::string& in, const std::string& out, bool validate_only, bool json_model) {
    try {
        auto report = parse_with_report(load_config(in));
        for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
        if (validate_only) {
            print_violations(std::cout, {});
            if (json_model) std::cout << model_to_json(report.pipeline).dump(2) << "\n";
            return kOk;
        }
        if (out.empty()) {
            std::cerr << "error: -o <out> is required\n";
            return kIo;
        }
        auto doc = bpmn::generate(report.pipeline);
        write_file(out, doc.xml);
        if (json_model) std::cout << model_to_json(report.pipeline).dump(2) << "\n";
        return kOk;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const ParseError& e) {
        print_parse_error(e);
        return kInvalid;
    } catch (const bpmn::GenerationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (!e.violations().empty()) print_violations(std::cerr, e.violations());
        return kInvalid;
    }
}

int diff_files(const std::string& a, const std::string& b, bool as_json) {
    try {
        auto ra = load_config(a);
        auto rb = load_config(b);
        auto d = diff::diff(parse(ra), parse(rb));
        if (as_json)
            std::cout << diff::to_json(d).dump(2) << "\n";
        else
            std::cout << diff::format_summary(d);
        return d.empty() ? kOk : kDifferent;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const ParseError& e) {
        print_parse_error(e);
        return kInvalid;
    }
}

std::optional<std::string> env_token() {
    if (const char* t = std::getenv("PIPETWIN_TOKEN"); t && *t) return std::string(t);
    return std::nullopt;
}

int ingest(const forge::ProjectHandle& handle, std::optional<int> limit, const std::string& store_path) {
    try {
        twin::Store store(store_path);
        twin::Bus bus;
        twin::Twin t(store, bus);
        t.start();
        t.register_project(handle);
        forge::VersionQuery vq;
        vq.limit = limit;
        forge::RunQuery rq;
        rq.limit = limit;
        auto report = t.sync(handle.project_id, vq, rq);
        t.wait_idle();
        auto versions = t.versions(handle.project_id);
        std::cout << report.snapshots << " snapshots, " << versions.size() << " versions, " << report.runs
                  << " runs, " << report.rejected.size() << " rejected\n";
        for (const auto& r : report.rejected) std::cerr << "rejected run " << r.run_id << ": " << r.reason << "\n";
        for (const auto& e : t.status().at("errors")) std::cerr << "error: " << e.at("message").get<std::string>() << "\n";
        return kOk;
    } catch (const twin::StoreError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const forge::ForgeError& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return kInvalid;
    } catch (const forge::InvalidHandle& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInvalid;
    }
}

int serve(const std::string& host, int port, const std::string& store_path, int poll_s) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    try {
        twin::Store store(store_path);
        twin::Bus bus;
        twin::Twin t(store, bus);
        t.start();
        if (auto token = env_token()) {
            for (auto h : t.projects()) {
                h.token = token;
                t.register_project(h);
            }
        }
        if (poll_s > 0) t.start_tracking(std::chrono::seconds(poll_s));

        api::Server server(t);
        const int bound = server.bind(host, port);
        if (bound < 0) {
            std::cerr << "error: cannot bind " << host << ":" << port << "\n";
            return kIo;
        }
        std::atomic<bool> signalled = false, done = false;
        std::jthread waiter([&server, &signalled, &done, set] {
            int sig = 0;
            sigwait(&set, &sig);
            signalled = true;
            // The signal may land before listen() has started.
            while (!done) {
                server.stop();
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
        });
        std::cerr << "listening on http://" << host << ":" << bound << "/api/v1\n";
        server.listen();
        done = true;
        if (!signalled) kill(getpid(), SIGTERM);
        return kOk;
    } catch (const twin::StoreError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pipetwin: digital twin for GitLab CI/CD pipelines"};
    app.require_subcommand(1);

    std::string in, out;
    bool validate_only = false, json_model = false;
    auto* tr = app.add_subcommand("transform", "Convert a .gitlab-ci.yml file to BPMN 2.0 XML");
    tr->add_option("input", in, "CI configuration file")->required();
    tr->add_option("-o,--output", out, "BPMN output file");
    tr->add_flag("--validate-only", validate_only, "Parse and validate only");
    tr->add_flag("--json-model", json_model, "Print the canonical model JSON to stdout");

    std::string a, b;
    bool as_json = false;
    auto* df = app.add_subcommand("diff", "Structural diff of two CI configuration files");
    df->add_option("a", a, "Before")->required();
    df->add_option("b", b, "After")->required();
    df->add_flag("--json", as_json, "Emit pipetwin.diff/1 JSON");

    forge::ProjectHandle handle;
    std::string token;
    std::optional<int> limit;
    std::string ingest_store = "pipetwin.db";
    auto* ig = app.add_subcommand("ingest", "Acquire configuration history and runs from GitLab");
    ig->add_option("--url", handle.base_url, "GitLab base URL")->required();
    ig->add_option("--project", handle.project_id, "Project id or path")->required();
    ig->add_option("--token", token, "Access token (or PIPETWIN_TOKEN)");
    ig->add_option("--limit", limit, "Maximum commits and runs")->check(CLI::PositiveNumber);
    ig->add_option("--ref", handle.ref, "Branch (default: project default branch)");
    ig->add_option("--file", handle.ci_file_path, "CI file path")->capture_default_str();
    ig->add_option("--store", ingest_store, "Store file")->capture_default_str();

    int port = 8080, poll_s = 0;
    std::string host = "127.0.0.1", serve_store = "pipetwin.db";
    auto* sv = app.add_subcommand("serve", "Serve the HTTP API");
    sv->add_option("--port", port, "Port")->capture_default_str()->check(CLI::Range(0, 65535));
    sv->add_option("--host", host, "Bind address")->capture_default_str();
    sv->add_option("--store", serve_store, "Store file")->capture_default_str();
    sv->add_option("--poll", poll_s, "Change polling interval in seconds (0 disables)")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kIo;
    }

    if (*tr) return transform(in, out, validate_only, json_model);
    if (*df) return diff_files(a, b, as_json);
    if (*ig) {
        if (!token.empty())
            handle.token = token;
        else
            handle.token = env_token();
        return ingest(handle, limit, ingest_store);
    }
    return serve(host, port, serve_store, poll_s);
}
