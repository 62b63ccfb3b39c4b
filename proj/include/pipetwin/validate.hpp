#pragma once

#include "pipetwin/model.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pipetwin {

/// One broken invariant. `rule` is a stable id ("R09-needs-cycle"), `entity`
/// names the offending stage/job/variable (cycles list members comma-joined).
struct Violation {
    std::string rule;
    std::string entity;
    std::string message;

    bool operator==(const Violation&) const = default;
};

/// Every violated structural invariant, sorted by rule id then entity.
/// Violations are data: this never throws.
std::vector<Violation> validate(const Pipeline& pipeline);

/// Execution-facet checks (time ordering, non-negative durations, failure
/// reasons only on failed jobs).
std::vector<Violation> validate(const PipelineRun& run);

/// SHA-256 of the raw configuration bytes as 64 lowercase hex characters.
std::string compute_yaml_hash(std::span<const std::byte> raw_bytes);
std::string compute_yaml_hash(std::string_view raw_bytes);

class ResolutionError : public Error {
public:
    ResolutionError(std::string job, std::string missing);

    const std::string& job() const { return job_; }
    const std::string& missing() const { return missing_; }

private:
    std::string job_;
    std::string missing_;
};

/// Directed graph over job names; an edge u -> v means v needs u.
class NeedsGraph {
public:
    NeedsGraph() = default;
    explicit NeedsGraph(std::vector<std::string> nodes);

    void add_edge(std::string_view from, std::string_view to);

    const std::vector<std::string>& nodes() const { return names_; }
    std::size_t edge_count() const { return edge_count_; }
    bool contains(std::string_view name) const;
    bool has_edge(std::string_view from, std::string_view to) const;
    std::vector<std::string> successors(std::string_view name) const;
    std::vector<std::string> predecessors(std::string_view name) const;

    /// Kahn's algorithm; among ready nodes the smallest name goes first.
    /// nullopt when the graph has a cycle.
    std::optional<std::vector<std::string>> topological_order() const;

    /// Same ordering restricted to the induced subgraph on `subset`.
    std::optional<std::vector<std::string>>
    topological_order(std::span<const std::string> subset) const;

    /// Strongly connected components with more than one node (or a self
    /// loop), each sorted by name; components sorted by first member.
    std::vector<std::vector<std::string>> cycles() const;

private:
    std::size_t index_of(std::string_view name) const;

    std::vector<std::string> names_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::vector<std::vector<std::size_t>> out_;
    std::vector<std::vector<std::size_t>> in_;
    std::size_t edge_count_ = 0;
};

/// Builds the needs graph. Throws ResolutionError on a need naming no job.
NeedsGraph needs_graph(const Pipeline& pipeline);

} // namespace pipetwin
