#include "pipetwin/validate.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <functional>
#include <memory>
#include <queue>
#include <set>

namespace pipetwin {

namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

void check_variable_keys(const std::vector<Variable>& vars, const std::string& owner,
                         std::vector<Violation>& out) {
    std::set<std::string> seen;
    std::set<std::string> reported;
    for (const auto& v : vars) {
        if (!seen.insert(v.key).second && reported.insert(v.key).second) {
            out.push_back({"R10-variable-duplicate", owner + ":" + v.key,
                           "variable '" + v.key + "' declared twice on " + owner});
        }
    }
}

} // namespace

std::vector<Violation> validate(const Pipeline& p) {
    std::vector<Violation> out;

    std::set<std::string> stages_seen;
    for (const auto& s : p.stage_order) {
        if (!stages_seen.insert(s).second)
            out.push_back({"R01-stage-duplicate", s, "stage '" + s + "' listed more than once"});
    }

    std::set<std::string> job_names;
    for (const auto& job : p.jobs) {
        if (!job_names.insert(job.name).second)
            out.push_back({"R04-job-duplicate", job.name, "job '" + job.name + "' defined twice"});
        if (job.name.empty() || job.name.front() == '.')
            out.push_back({"R03-job-name", job.name,
                           "job name must be non-empty and must not start with '.'"});
        if (!p.stage_index(job.stage))
            out.push_back({"R02-stage-undefined", job.name,
                           "job '" + job.name + "' uses undeclared stage '" + job.stage + "'"});
        if (job.retry && *job.retry < 0)
            out.push_back({"R13-retry-negative", job.name, "retry must be non-negative"});
        check_variable_keys(job.variables, job.name, out);
    }

    bool graph_resolvable = true;
    for (const auto& job : p.jobs) {
        std::set<std::string> needs_seen;
        const auto own_stage = p.stage_index(job.stage);
        for (const auto& need : job.needs) {
            if (!needs_seen.insert(need).second) {
                out.push_back({"R05-needs-duplicate", job.name,
                               "job '" + job.name + "' lists need '" + need + "' twice"});
                continue;
            }
            if (need == job.name) {
                out.push_back({"R06-needs-self", job.name, "job '" + job.name + "' needs itself"});
                continue;
            }
            const auto hits = std::count_if(p.jobs.begin(), p.jobs.end(),
                                            [&](const Job& j) { return j.name == need; });
            if (hits != 1) {
                graph_resolvable = false;
                out.push_back({"R07-needs-unresolved", job.name,
                               "job '" + job.name + "' needs '" + need +
                                   "' which does not resolve to exactly one job"});
                continue;
            }
            const auto target_stage = p.stage_index(p.find_job(need)->stage);
            if (own_stage && target_stage && *target_stage > *own_stage)
                out.push_back({"R08-needs-later-stage", job.name,
                               "job '" + job.name + "' needs '" + need + "' from a later stage"});
        }
    }

    if (graph_resolvable && job_names.size() == p.jobs.size()) {
        NeedsGraph g(std::vector<std::string>(job_names.begin(), job_names.end()));
        for (const auto& job : p.jobs) {
            std::set<std::string> added;
            for (const auto& need : job.needs) {
                if (need != job.name && added.insert(need).second) g.add_edge(need, job.name);
            }
        }
        for (const auto& cycle : g.cycles()) {
            out.push_back({"R09-needs-cycle", join(cycle, ","),
                           "needs cycle among {" + join(cycle, ", ") + "}"});
        }
    }

    check_variable_keys(p.variables, "pipeline", out);

    std::set<TriggerType> triggers_seen;
    for (const auto& t : p.triggers) {
        if (!triggers_seen.insert(t.trigger_type).second)
            out.push_back({"R11-trigger-duplicate", std::string(to_string(t.trigger_type)),
                           "trigger listed more than once"});
    }

    for (const auto& t : p.templates) {
        if (t.name.empty() || t.name.front() != '.')
            out.push_back({"R12-template-name", t.name, "template names must start with '.'"});
    }

    std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) {
        return std::tie(a.rule, a.entity) < std::tie(b.rule, b.entity);
    });
    return out;
}

std::vector<Violation> validate(const PipelineRun& run) {
    std::vector<Violation> out;
    if (run.started_at && run.finished_at && *run.finished_at < *run.started_at)
        out.push_back({"R20-run-time-order", run.run_id, "finished_at precedes started_at"});
    if (run.duration_s && *run.duration_s < 0)
        out.push_back({"R21-run-duration", run.run_id, "negative duration"});
    for (const auto& jr : run.job_runs) {
        if (jr.started_at && jr.finished_at && *jr.finished_at < *jr.started_at)
            out.push_back({"R20-run-time-order", jr.job_name, "finished_at precedes started_at"});
        if (jr.duration_s && *jr.duration_s < 0)
            out.push_back({"R22-job-duration", jr.job_name, "negative duration"});
        if (jr.queued_s && *jr.queued_s < 0)
            out.push_back({"R23-job-queue", jr.job_name, "negative queue time"});
        if (jr.failure_reason && jr.status != ExecutionStatus::failed)
            out.push_back({"R24-failure-reason", jr.job_name,
                           "failure_reason present on a job that did not fail"});
    }
    std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) {
        return std::tie(a.rule, a.entity) < std::tie(b.rule, b.entity);
    });
    return out;
}

std::string compute_yaml_hash(std::span<const std::byte> raw_bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), raw_bytes.data(), raw_bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
        throw Error("sha256 digest failed");

    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned i = 0; i < len; ++i) {
        hex.push_back(kHex[digest[i] >> 4]);
        hex.push_back(kHex[digest[i] & 0xF]);
    }
    return hex;
}

std::string compute_yaml_hash(std::string_view raw_bytes) {
    return compute_yaml_hash(std::as_bytes(std::span(raw_bytes.data(), raw_bytes.size())));
}

ResolutionError::ResolutionError(std::string job, std::string missing)
    : Error("job '" + job + "' needs unknown job '" + missing + "'"),
      job_(std::move(job)),
      missing_(std::move(missing)) {}

NeedsGraph::NeedsGraph(std::vector<std::string> nodes) : names_(std::move(nodes)) {
    out_.resize(names_.size());
    in_.resize(names_.size());
    for (std::size_t i = 0; i < names_.size(); ++i) index_.emplace(names_[i], i);
}

std::size_t NeedsGraph::index_of(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown graph node '" + std::string(name) + "'");
    return it->second;
}

bool NeedsGraph::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

void NeedsGraph::add_edge(std::string_view from, std::string_view to) {
    const auto a = index_of(from);
    const auto b = index_of(to);
    out_[a].push_back(b);
    in_[b].push_back(a);
    ++edge_count_;
}

bool NeedsGraph::has_edge(std::string_view from, std::string_view to) const {
    if (!contains(from) || !contains(to)) return false;
    const auto& succ = out_[index_of(from)];
    return std::find(succ.begin(), succ.end(), index_of(to)) != succ.end();
}

std::vector<std::string> NeedsGraph::successors(std::string_view name) const {
    std::vector<std::string> r;
    for (auto i : out_[index_of(name)]) r.push_back(names_[i]);
    std::sort(r.begin(), r.end());
    return r;
}

std::vector<std::string> NeedsGraph::predecessors(std::string_view name) const {
    std::vector<std::string> r;
    for (auto i : in_[index_of(name)]) r.push_back(names_[i]);
    std::sort(r.begin(), r.end());
    return r;
}

std::optional<std::vector<std::string>> NeedsGraph::topological_order() const {
    return topological_order(names_);
}

std::optional<std::vector<std::string>>
NeedsGraph::topological_order(std::span<const std::string> subset) const {
    std::vector<char> member(names_.size(), 0);
    for (const auto& n : subset) member[index_of(n)] = 1;

    std::vector<std::size_t> indegree(names_.size(), 0);
    for (std::size_t v = 0; v < names_.size(); ++v) {
        if (!member[v]) continue;
        for (auto u : in_[v]) indegree[v] += member[u];
    }

    auto later = [this](std::size_t a, std::size_t b) { return names_[a] > names_[b]; };
    std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(later)> ready(later);
    std::size_t members = 0;
    for (std::size_t v = 0; v < names_.size(); ++v) {
        if (!member[v]) continue;
        ++members;
        if (indegree[v] == 0) ready.push(v);
    }

    std::vector<std::string> order;
    while (!ready.empty()) {
        const auto u = ready.top();
        ready.pop();
        order.push_back(names_[u]);
        for (auto v : out_[u]) {
            if (member[v] && --indegree[v] == 0) ready.push(v);
        }
    }
    if (order.size() != members) return std::nullopt;
    return order;
}

std::vector<std::vector<std::string>> NeedsGraph::cycles() const {
    // Tarjan's SCC, iterative over an explicit stack of (node, next-edge).
    const std::size_t n = names_.size();
    constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> index(n, kUnset), low(n, 0);
    std::vector<char> on_stack(n, 0);
    std::vector<std::size_t> stack;
    std::vector<std::vector<std::string>> result;
    std::size_t counter = 0;

    for (std::size_t root = 0; root < n; ++root) {
        if (index[root] != kUnset) continue;
        std::vector<std::pair<std::size_t, std::size_t>> work{{root, 0}};
        while (!work.empty()) {
            auto& [v, edge] = work.back();
            if (edge == 0 && index[v] == kUnset) {
                index[v] = low[v] = counter++;
                stack.push_back(v);
                on_stack[v] = 1;
            }
            if (edge < out_[v].size()) {
                const auto w = out_[v][edge++];
                if (index[w] == kUnset) {
                    work.emplace_back(w, 0);
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
                continue;
            }
            if (low[v] == index[v]) {
                std::vector<std::string> comp;
                std::size_t w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = 0;
                    comp.push_back(names_[w]);
                } while (w != v);
                const bool self_loop = comp.size() == 1 && has_edge(comp[0], comp[0]);
                if (comp.size() > 1 || self_loop) {
                    std::sort(comp.begin(), comp.end());
                    result.push_back(std::move(comp));
                }
            }
            const auto finished = v;
            work.pop_back();
            if (!work.empty()) {
                auto parent = work.back().first;
                low[parent] = std::min(low[parent], low[finished]);
            }
        }
    }
    std::sort(result.begin(), result.end());
    return result;
}

NeedsGraph needs_graph(const Pipeline& p) {
    std::vector<std::string> names;
    for (const auto& j : p.jobs) names.push_back(j.name);
    NeedsGraph g(names);
    for (const auto& job : p.jobs) {
        for (const auto& need : job.needs) {
            if (!g.contains(need)) throw ResolutionError(job.name, need);
            g.add_edge(need, job.name);
        }
    }
    return g;
}

} // namespace pipetwin
