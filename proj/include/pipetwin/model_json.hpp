#pragma once

// Canonical JSON form of the metamodel. Object keys are emitted in sorted
// order (nlohmann::json's default map), so dump() is byte-stable.

#include "pipetwin/model.hpp"

#include <nlohmann/json.hpp>

#include <string_view>

namespace pipetwin {

inline constexpr std::string_view kModelSchema = "pipetwin.model/1";
inline constexpr std::string_view kRunSchema = "pipetwin.run/1";

/// Raised when a JSON document does not match the expected shape.
class SchemaError : public Error {
public:
    using Error::Error;
};

nlohmann::json model_to_json(const Pipeline& pipeline);
Pipeline model_from_json(const nlohmann::json& doc);

nlohmann::json run_to_json(const PipelineRun& run);
PipelineRun run_from_json(const nlohmann::json& doc);

// nlohmann ADL hooks. from_json throws SchemaError on unknown enum members
// or missing fields.
void to_json(nlohmann::json& j, WhenPolicy v);
void from_json(const nlohmann::json& j, WhenPolicy& v);
void to_json(nlohmann::json& j, TriggerType v);
void from_json(const nlohmann::json& j, TriggerType& v);
void to_json(nlohmann::json& j, ExecutionStatus v);
void from_json(const nlohmann::json& j, ExecutionStatus& v);

void to_json(nlohmann::json& j, const Variable& v);
void from_json(const nlohmann::json& j, Variable& v);
void to_json(nlohmann::json& j, const Condition& c);
void from_json(const nlohmann::json& j, Condition& c);
void to_json(nlohmann::json& j, const Trigger& t);
void from_json(const nlohmann::json& j, Trigger& t);
void to_json(nlohmann::json& j, const Job& job);
void from_json(const nlohmann::json& j, Job& job);
void to_json(nlohmann::json& j, const TemplateBody& body);
void from_json(const nlohmann::json& j, TemplateBody& body);
void to_json(nlohmann::json& j, const Template& t);
void from_json(const nlohmann::json& j, Template& t);
void to_json(nlohmann::json& j, const JobRun& r);
void from_json(const nlohmann::json& j, JobRun& r);

} // namespace pipetwin
