#pragma once

// .gitlab-ci.yml -> Pipeline.

#include "pipetwin/model.hpp"
#include "pipetwin/validate.hpp"

#include <yaml-cpp/yaml.h>

#include <map>
#include <string>
#include <vector>

namespace pipetwin {

using RawNode = YAML::Node;

struct Provenance {
    std::string ref;
    std::string commit_sha;
    std::string file_path = ".gitlab-ci.yml";

    bool operator==(const Provenance&) const = default;
};

struct RawConfig {
    std::string raw_bytes;
    Provenance provenance;
};

/// Top-level keys partitioned into reserved directives, '.'-prefixed
/// templates and jobs. `job_order` keeps declaration order.
struct SectionSplit {
    std::map<std::string, RawNode> reserved;
    std::map<std::string, RawNode> templates;
    std::map<std::string, RawNode> job_nodes;
    std::vector<std::string> job_order;
    std::vector<std::string> template_order;
};

enum class ParseErrorKind {
    yaml_syntax,
    not_a_mapping,
    validation_failed,
    extends_cycle,
    unknown_when_policy,
    unknown_template,
    max_depth_exceeded,
    invalid_field,
};

std::string_view to_string(ParseErrorKind kind);

class ParseError : public Error {
public:
    ParseError(ParseErrorKind kind, const std::string& message,
               std::vector<Violation> violations = {});

    ParseErrorKind kind() const { return kind_; }
    /// Populated for validation_failed.
    const std::vector<Violation>& violations() const { return violations_; }

private:
    ParseErrorKind kind_;
    std::vector<Violation> violations_;
};

struct ParseReport {
    Pipeline pipeline;
    std::vector<std::string> warnings;
};

inline constexpr int kMaxExtendsDepth = 16;

/// Directive keys that never become jobs.
bool is_reserved_key(std::string_view key);

SectionSplit split_sections(const RawNode& root);

/// Merges the extends chain (base-most first, entries left to right) and then
/// the node's own keys. Mappings merge key-wise with the later side winning;
/// scalars and lists are replaced. The result has no `extends` key.
/// `templates` is the lookup table for extends targets.
RawNode resolve_extends(const RawNode& job_node, const std::map<std::string, RawNode>& templates);

/// Maps `$CI_PIPELINE_SOURCE == "<src>"` rules to triggers, first-seen order,
/// deduplicated. Non-matching rules append a warning.
std::vector<Trigger> extract_triggers(const RawNode& workflow_node,
                                      std::vector<std::string>* warnings = nullptr);

ParseReport parse_with_report(const RawConfig& config);
Pipeline parse(const RawConfig& config);

} // namespace pipetwin
