#include "pipetwin/bus.hpp"

#include "pipetwin/model_json.hpp"

#include <algorithm>
#include <array>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <regex>
#include <vector>

namespace pipetwin::twin {

using nlohmann::json;

struct Subscription::State {
    Topic topic;
    std::size_t capacity;
    std::weak_ptr<Bus::Impl> bus;

    mutable std::mutex mu;
    std::condition_variable readable;
    std::condition_variable writable;
    std::deque<Envelope> queue;
    bool closed = false;

    void push(Envelope e) {
        std::unique_lock lock(mu);
        writable.wait(lock, [&] { return closed || queue.size() < capacity; });
        if (closed) return;
        queue.push_back(std::move(e));
        readable.notify_one();
    }

    std::optional<Envelope> pop_locked() {
        if (closed || queue.empty()) return std::nullopt;
        auto e = std::move(queue.front());
        queue.pop_front();
        writable.notify_all();
        return e;
    }
};

struct Bus::Impl {
    struct TopicState {
        mutable std::mutex mu;
        std::uint64_t sequence = 0;
        std::vector<std::shared_ptr<Subscription::State>> subscribers;
    };

    std::size_t default_capacity;
    std::function<Timestamp()> clock;
    std::array<TopicState, std::size(kAllTopics)> topics;
    std::mutex registry_mu;
    std::vector<std::weak_ptr<Subscription::State>> registry;

    TopicState& topic(Topic t) { return topics[std::size_t(t)]; }

    void remove(const std::shared_ptr<Subscription::State>& s) {
        auto& ts = topic(s->topic);
        std::lock_guard lock(ts.mu);
        std::erase(ts.subscribers, s);
    }
};

namespace {

void require(bool ok, Topic t, const std::string& what) {
    if (!ok) throw SchemaViolation(std::string(to_string(t)) + " payload: " + what);
}

bool is_hash(const json& j) {
    static const std::regex re("^[0-9a-f]{64}$");
    return j.is_string() && std::regex_match(j.get_ref<const std::string&>(), re);
}

bool is_string_field(const json& j, const char* key) { return j.contains(key) && j.at(key).is_string(); }

void close_state(const std::shared_ptr<Subscription::State>& s) {
    {
        std::lock_guard lock(s->mu);
        s->closed = true;
        s->queue.clear();
    }
    s->readable.notify_all();
    s->writable.notify_all();
}

} // namespace

std::string_view to_string(Topic t) {
    switch (t) {
    case Topic::config_snapshot: return "ConfigSnapshot";
    case Topic::execution_data: return "ExecutionData";
    case Topic::bpmn_xml: return "BpmnXml";
    case Topic::change_detection: return "ChangeDetection";
    }
    return "ConfigSnapshot";
}

std::optional<Topic> parse_topic(std::string_view s) {
    for (auto t : kAllTopics) {
        if (to_string(t) == s) return t;
    }
    return std::nullopt;
}

void check_payload(Topic topic, const json& p) {
    require(p.is_object(), topic, "must be an object");
    require(is_string_field(p, "project_id") && !p.at("project_id").get<std::string>().empty(), topic,
            "project_id must be a non-empty string");
    switch (topic) {
    case Topic::config_snapshot:
    case Topic::change_detection: {
        require(p.contains("snapshot") && p.at("snapshot").is_object(), topic, "snapshot must be an object");
        const auto& s = p.at("snapshot");
        for (const char* key : {"raw_bytes", "ref", "commit_sha", "file_path", "committed_at", "fetched_at"})
            require(is_string_field(s, key), topic, std::string("snapshot.") + key + " must be a string");
        require(s.contains("yaml_hash") && is_hash(s.at("yaml_hash")), topic, "snapshot.yaml_hash must be 64 hex");
        break;
    }
    case Topic::execution_data:
        require(p.contains("run"), topic, "run missing");
        try {
            run_from_json(p.at("run"));
        } catch (const SchemaError& e) {
            require(false, topic, e.what());
        }
        break;
    case Topic::bpmn_xml:
        require(p.contains("yaml_hash") && is_hash(p.at("yaml_hash")), topic, "yaml_hash must be 64 hex");
        require(is_string_field(p, "xml"), topic, "xml must be a string");
        break;
    }
}

Subscription::Subscription(std::shared_ptr<State> state) : state_(std::move(state)) {}

Subscription::~Subscription() { close(); }

Topic Subscription::topic() const { return state_->topic; }

std::optional<Envelope> Subscription::next() {
    std::unique_lock lock(state_->mu);
    state_->readable.wait(lock, [&] { return state_->closed || !state_->queue.empty(); });
    return state_->pop_locked();
}

std::optional<Envelope> Subscription::next_for(std::chrono::milliseconds timeout) {
    std::unique_lock lock(state_->mu);
    state_->readable.wait_for(lock, timeout, [&] { return state_->closed || !state_->queue.empty(); });
    return state_->pop_locked();
}

std::optional<Envelope> Subscription::try_next() {
    std::lock_guard lock(state_->mu);
    return state_->pop_locked();
}

void Subscription::close() {
    if (!state_) return;
    close_state(state_);
    if (auto bus = state_->bus.lock()) bus->remove(state_);
}

bool Subscription::closed() const {
    std::lock_guard lock(state_->mu);
    return state_->closed;
}

Bus::Bus(std::size_t default_capacity, std::function<Timestamp()> clock) : impl_(std::make_shared<Impl>()) {
    impl_->default_capacity = std::max<std::size_t>(default_capacity, 1);
    impl_->clock = std::move(clock);
}

Bus::~Bus() { shutdown(); }

std::uint64_t Bus::publish(Topic topic, json payload) {
    check_payload(topic, payload);
    Envelope e;
    e.topic = topic;
    e.payload = std::move(payload);
    e.published_at = impl_->clock
                         ? impl_->clock()
                         : std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());

    auto& ts = impl_->topic(topic);
    std::lock_guard lock(ts.mu);
    e.sequence = ++ts.sequence;
    for (const auto& s : ts.subscribers) s->push(e);
    return e.sequence;
}

std::unique_ptr<Subscription> Bus::subscribe(Topic topic, std::size_t capacity) {
    auto state = std::make_shared<Subscription::State>();
    state->topic = topic;
    state->capacity = capacity ? capacity : impl_->default_capacity;
    state->bus = impl_;
    auto& ts = impl_->topic(topic);
    std::lock_guard lock(ts.mu);
    ts.subscribers.push_back(state);
    {
        std::lock_guard reg(impl_->registry_mu);
        std::erase_if(impl_->registry, [](const auto& w) { return w.expired(); });
        impl_->registry.push_back(state);
    }
    return std::make_unique<Subscription>(state);
}

std::uint64_t Bus::last_sequence(Topic topic) const {
    auto& ts = impl_->topic(topic);
    std::lock_guard lock(ts.mu);
    return ts.sequence;
}

std::size_t Bus::subscriber_count(Topic topic) const {
    auto& ts = impl_->topic(topic);
    std::lock_guard lock(ts.mu);
    return ts.subscribers.size();
}

void Bus::shutdown() {
    std::vector<std::shared_ptr<Subscription::State>> subs;
    {
        std::lock_guard reg(impl_->registry_mu);
        for (const auto& w : impl_->registry) {
            if (auto s = w.lock()) subs.push_back(std::move(s));
        }
    }
    for (const auto& s : subs) close_state(s);
}

} // namespace pipetwin::twin
