#pragma once

// Data Retrieval and Processing building blocks: service state information
// (SSI), the Register buffer, service discovery, workflow plans, the
// replica autoscaler and deadline enforcement.

#include <array>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "offload/codec.hpp"
#include "offload/config_store.hpp"
#include "offload/domain.hpp"
#include "offload/errors.hpp"
#include "offload/placement.hpp"

namespace offload {

struct ServiceEntry {
    ServiceKind service_kind = ServiceKind::Read;
    std::int64_t min_cpu_millicores = 1000;
    std::int64_t min_mem_mb = 512;
    int initial_replicas = 1;
    // Simultaneous steps one instance can serve.
    int concurrency = 1;
};

struct ServiceDynamic {
    int current_replicas = 0;
    bool available = true;
};

struct SsiLimits {
    std::size_t register_capacity = 1024;
    std::map<ServiceKind, int> max_replicas_per_kind;
    std::map<ServiceKind, int> min_replicas_per_kind;
};

struct Ssi {
    std::vector<ServiceEntry> services;
    std::map<ServiceKind, ServiceDynamic> dynamic;
    NodeCapacity node_template;
    // Shared step concurrency of a monolithic node.
    int node_concurrency = 4;
    SsiLimits limits;

    const ServiceEntry* find(ServiceKind kind) const;
    int max_replicas(ServiceKind kind) const;
    int min_replicas(ServiceKind kind) const;
};

// Parse and check an SSI document. Syntax errors carry the line; schema and
// range problems name the offending field.
Ssi parse_ssi(std::string_view text, const std::string& origin);
Ssi ssi_from_json(const Json& j, const std::string& origin);
Ssi load_ssi(const std::string& path);
Json ssi_to_json(const Ssi& ssi);
// Throws InvariantError describing the first violated invariant.
void validate_ssi(const Ssi& ssi);

inline std::size_t kind_index(ServiceKind k) { return static_cast<std::size_t>(k); }
inline constexpr std::size_t kServiceKindCount = 5;

// Bounded FIFO per service kind for requests that found no ready instance.
template <typename T>
class BoundedRegister {
public:
    explicit BoundedRegister(std::size_t capacity_per_kind = 1024) : capacity_(capacity_per_kind) {}

    // Throws RegisterFull when the kind's queue is at capacity.
    void enqueue(ServiceKind kind, T item) {
        auto& q = queues_[kind_index(kind)];
        if (q.size() >= capacity_)
            throw RegisterFull("register full for " + std::string(to_string(kind)));
        q.push_back(std::move(item));
        auto& hw = high_water_[kind_index(kind)];
        if (q.size() > hw) hw = q.size();
    }

    std::optional<T> dequeue(ServiceKind kind) {
        auto& q = queues_[kind_index(kind)];
        if (q.empty()) return std::nullopt;
        T item = std::move(q.front());
        q.pop_front();
        return item;
    }

    bool full(ServiceKind kind) const { return queues_[kind_index(kind)].size() >= capacity_; }
    std::size_t size(ServiceKind kind) const { return queues_[kind_index(kind)].size(); }
    std::size_t high_water(ServiceKind kind) const { return high_water_[kind_index(kind)]; }
    std::size_t capacity() const { return capacity_; }
    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& q : queues_) n += q.size();
        return n;
    }

    // Removes and returns every queued item of a kind.
    std::vector<T> drain(ServiceKind kind) {
        auto& q = queues_[kind_index(kind)];
        std::vector<T> out(std::make_move_iterator(q.begin()), std::make_move_iterator(q.end()));
        q.clear();
        return out;
    }

private:
    std::size_t capacity_;
    std::array<std::deque<T>, kServiceKindCount> queues_;
    std::array<std::size_t, kServiceKindCount> high_water_{};
};

using Register = BoundedRegister<RequestEnvelope>;

enum class Health { Ready, Busy, Down };
std::string_view to_string(Health h);

struct DirectoryEntry {
    std::string instance_id;
    std::string node_id;
    Health health = Health::Ready;
    std::size_t queue_len = 0;
    std::size_t in_service = 0;
};

class ServiceDirectory {
public:
    void add(ServiceKind kind, DirectoryEntry entry);
    void remove(const std::string& instance_id);
    // Enforces Ready<->Busy and any->Down; Down is terminal.
    void set_health(const std::string& instance_id, Health health);
    void set_load(const std::string& instance_id, std::size_t in_service, std::size_t queue_len);

    const DirectoryEntry* find(const std::string& instance_id) const;
    const std::vector<DirectoryEntry>& instances(ServiceKind kind) const;
    std::size_t live_count(ServiceKind kind) const;
    bool all_idle(ServiceKind kind) const;

private:
    DirectoryEntry* find_mut(const std::string& instance_id);
    std::array<std::vector<DirectoryEntry>, kServiceKindCount> entries_;
};

enum class StepKind { Read, Write, Estimate, Respond };
std::string_view to_string(StepKind k);
ServiceKind service_for(StepKind k);

struct WorkflowStep {
    StepKind kind = StepKind::Respond;
    // Runs only when the preceding read found nothing.
    bool on_miss_only = false;
    std::optional<RetryPolicy> retry;

    bool operator==(const WorkflowStep&) const = default;
};

struct WorkflowPlan {
    std::vector<WorkflowStep> steps;

    std::vector<StepKind> kinds() const;
};

struct PlanOptions {
    int traffic_engineer_reads = 3;
    RetryPolicy read_retry;
};

WorkflowPlan plan_workflow(RequestKind kind, const PlanOptions& options = {});

struct AutoscalerPolicy {
    std::size_t up_threshold = 10;
    int sustain_window = 3;
    int idle_window = 10;
    Nanos tick = std::chrono::seconds(1);
};

struct ScalingAction {
    ServiceKind kind = ServiceKind::Read;
    int delta = 0;
    int replicas_after = 0;

    bool operator==(const ScalingAction&) const = default;
};

// Per-kind replica controller. Scale up after `sustain_window` consecutive
// ticks with backlog above `up_threshold`; scale down after `idle_window`
// consecutive ticks with every instance idle and nothing queued. Replica counts
// in the SSI dynamic section are updated and clipped to [min, max].
class Autoscaler {
public:
    explicit Autoscaler(AutoscalerPolicy policy = {}) : policy_(policy) {}

    std::vector<ScalingAction> tick(const ServiceDirectory& directory,
                                    const std::function<std::size_t(ServiceKind)>& backlog,
                                    Ssi& ssi);

    const AutoscalerPolicy& policy() const { return policy_; }

private:
    AutoscalerPolicy policy_;
    std::array<int, kServiceKindCount> over_ticks_{};
    std::array<int, kServiceKindCount> idle_ticks_{};
};

// Timeout response iff now - arrival_ts exceeds the request deadline.
std::optional<ResponseEnvelope> enforce_deadline(const RequestEnvelope& req, Nanos now);

}  // namespace offload
