#pragma once

#include "pipetwin/parser.hpp"

#include <cstdio>
#include <cstdlib>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

namespace fixtures {

inline std::string dir() { return PIPETWIN_FIXTURES; }

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string read(const std::string& name) { return slurp(std::filesystem::path(dir()) / name); }

inline pipetwin::Pipeline parse_text(const std::string& text, const std::string& sha = "0000000") {
    return pipetwin::parse(pipetwin::RawConfig{text, {"main", sha, ".gitlab-ci.yml"}});
}

inline pipetwin::Pipeline parse_file(const std::string& name) { return parse_text(read(name)); }

inline std::vector<std::filesystem::path> corpus() {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(std::filesystem::path(dir()) / "corpus"))
        if (e.path().extension() == ".yml") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

/// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "pipetwin-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline void write(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

struct Command {
    int exit_code = -1;
    std::string out;
};

/// Runs through /bin/sh; stderr is merged into `out` when `merge_stderr`.
inline Command run(const std::string& cmd, bool merge_stderr = true) {
    Command c;
    FILE* p = popen((cmd + (merge_stderr ? " 2>&1" : " 2>/dev/null")).c_str(), "r");
    if (!p) return c;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) c.out.append(buf, n);
    const int status = pclose(p);
    c.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return c;
}

inline std::string quote(const std::string& s) {
    std::string q = "'";
    for (char ch : s) {
        if (ch == '\'') q += "'\\''";
        else q += ch;
    }
    return q + "'";
}

/// Validates every file against BPMN20.xsd in a single interpreter run.
inline bool xsd_valid_all(const std::vector<std::filesystem::path>& files, std::string* detail = nullptr) {
    std::string cmd = quote(PIPETWIN_PYTHON) + " " + quote(PIPETWIN_XSD_SCRIPT);
    for (const auto& f : files) cmd += " " + quote(f.string());
    auto r = run(cmd);
    if (detail) *detail = r.out;
    return r.exit_code == 0;
}

inline bool xsd_valid(const std::filesystem::path& file, std::string* detail = nullptr) {
    return xsd_valid_all({file}, detail);
}

inline bool xsd_valid_text(const std::string& xml, std::string* detail = nullptr) {
    TempDir t;
    write(t / "doc.bpmn", xml);
    return xsd_valid(t / "doc.bpmn", detail);
}

} // namespace fixtures
