#pragma once

// In-process publish/subscribe. Each subscription owns a bounded queue; a
// publisher blocks while any subscriber queue of the topic is full.

#include "pipetwin/model.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string_view>

namespace pipetwin::twin {

enum class Topic { config_snapshot, execution_data, bpmn_xml, change_detection };

inline constexpr Topic kAllTopics[] = {Topic::config_snapshot, Topic::execution_data, Topic::bpmn_xml,
                                       Topic::change_detection};

std::string_view to_string(Topic t);
std::optional<Topic> parse_topic(std::string_view s);

struct Envelope {
    Topic topic = Topic::config_snapshot;
    std::uint64_t sequence = 0;
    nlohmann::json payload;
    Timestamp published_at;
};

class SchemaViolation : public Error {
public:
    using Error::Error;
};

/// Payload shapes:
///   ConfigSnapshot, ChangeDetection  {project_id, snapshot: forge snapshot JSON}
///   ExecutionData                    {project_id, run: pipetwin.run/1}
///   BpmnXml                          {project_id, yaml_hash, xml}
void check_payload(Topic topic, const nlohmann::json& payload);

class Subscription {
public:
    struct State;

    explicit Subscription(std::shared_ptr<State> state);
    ~Subscription();

    Subscription(const Subscription&) = delete;
    Subscription& operator=(const Subscription&) = delete;

    Topic topic() const;

    /// Blocks until an envelope arrives; nullopt once closed.
    std::optional<Envelope> next();
    std::optional<Envelope> next_for(std::chrono::milliseconds timeout);
    std::optional<Envelope> try_next();

    /// Stops delivery; queued envelopes are dropped and blocked publishers
    /// released.
    void close();
    bool closed() const;

private:
    std::shared_ptr<State> state_;
};

class Bus {
public:
    explicit Bus(std::size_t default_capacity = 64, std::function<Timestamp()> clock = {});
    ~Bus();

    Bus(const Bus&) = delete;
    Bus& operator=(const Bus&) = delete;

    /// Validates the payload, assigns the next per-topic sequence (from 1) and
    /// enqueues to every current subscriber. Throws SchemaViolation.
    std::uint64_t publish(Topic topic, nlohmann::json payload);

    /// Receives envelopes published after this call. capacity 0 uses the
    /// bus default.
    std::unique_ptr<Subscription> subscribe(Topic topic, std::size_t capacity = 0);

    std::uint64_t last_sequence(Topic topic) const;
    std::size_t subscriber_count(Topic topic) const;

    /// Closes every subscription; later publishes still get sequences.
    void shutdown();

    struct Impl;

private:
    std::shared_ptr<Impl> impl_;
};

} // namespace pipetwin::twin
