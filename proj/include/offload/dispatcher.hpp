#pragma once

// Request dispatch for the three orchestration modes. A Dispatcher owns the
// service runtimes of one cluster and drives every request through its
// workflow plan on an Executor, so the same code runs under simulated and
// wall-clock time. All public methods must be called on the executor's
// context.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "offload/config_store.hpp"
#include "offload/executor.hpp"
#include "offload/orchestration.hpp"
#include "offload/placement.hpp"
#include "offload/random.hpp"
#include "offload/scenario.hpp"

namespace offload {

struct Job {
    RequestEnvelope request;
    // Explicit store key; derived from qos and state when absent.
    std::optional<ConfigKey> key;
    // Configuration to store on a write step (ResourceUpdate).
    std::optional<ChannelConfig> payload;
    // Selects the per-user link delay stream.
    std::uint64_t user = 0;
};

struct Outcome {
    ResponseEnvelope response;
    // Record read or written by the workflow, if any.
    std::optional<StoreRecord> record;
    std::string body;
    Nanos submitted_at{0};
    Nanos delivered_at{0};
};

using Completion = std::function<void(Outcome)>;

struct DispatchCounters {
    std::uint64_t submitted = 0;
    std::uint64_t ok = 0;
    std::uint64_t timeout = 0;
    std::uint64_t rejected = 0;
    std::uint64_t failed = 0;

    std::uint64_t finalized() const { return ok + timeout + rejected + failed; }
    std::uint64_t in_flight() const { return submitted - finalized(); }
};

struct RuntimeView {
    std::string instance_id;
    std::string node_id;
    ServiceKind kind = ServiceKind::Read;
    int concurrency = 1;
    int in_service = 0;
    int max_in_service = 0;
    bool down = false;
    bool removed = false;
};

class Dispatcher {
public:
    // `results` (optional) receives every Ok response's configuration.
    Dispatcher(const Scenario& scenario, Executor& executor, ConfigStore& store,
               ConfigStore* results, std::uint64_t seed);
    ~Dispatcher();

    Dispatcher(const Dispatcher&) = delete;
    Dispatcher& operator=(const Dispatcher&) = delete;

    // Places the initial instances and, in kube mode, starts autoscaler ticks.
    void start();
    void stop_ticks();

    // `done` runs once, when the response reaches the client side of the link.
    void submit(Job job, Completion done);

    // Downs an instance or every instance on a node. Throws UnknownTarget.
    void inject_failure(const std::string& target);
    void inject_failure_at(const std::string& target, Nanos when);

    const DispatchCounters& counters() const { return counters_; }
    const ServiceDirectory& directory() const { return directory_; }
    const Ssi& ssi() const { return ssi_; }
    const Placement& nodes() const { return nodes_; }
    std::vector<RuntimeView> runtimes() const;
    std::size_t register_size(ServiceKind kind) const { return register_.size(kind); }
    std::size_t register_high_water(ServiceKind kind) const { return register_.high_water(kind); }
    const std::vector<ScalingAction>& scaling_log() const { return scaling_log_; }
    const Scenario& scenario() const { return scenario_; }
    Mode mode() const { return scenario_.mode; }

private:
    struct Runtime;
    struct JobState;
    struct Ticket {
        std::uint32_t slot = 0;
        std::uint32_t generation = 0;
    };

    JobState* live(Ticket t);
    Ticket allocate();
    void release(Ticket t);

    void arrive(Ticket t);
    void run_step(Ticket t);
    void advance(Ticket t);
    void acquire(Ticket t, ServiceKind kind);
    void start_on(Runtime& rt, Ticket t);
    void complete_step(Runtime& rt, std::uint64_t epoch, Ticket t);
    void free_slot(Runtime& rt);
    void apply_step(Ticket t);
    void finalize(Ticket t, Status status);
    void on_deadline(Ticket t);

    Runtime* pick_ready(ServiceKind kind);
    bool has_live(ServiceKind kind) const;
    void fail_kind_backlog(ServiceKind kind);
    void fail_runtime(Runtime& rt);
    void sync(Runtime& rt);
    Runtime& add_runtime(ServiceKind kind, const std::string& node_id);
    void add_instance(ServiceKind kind);
    void remove_instance(ServiceKind kind);
    void tick();
    Rng& link_rng(std::uint64_t user);
    Nanos sample(const Distribution& d, Rng& rng) const;

    Scenario scenario_;
    Executor& exec_;
    ConfigStore& store_;
    ConfigStore* results_;
    std::uint64_t seed_;
    Ssi ssi_;
    PlanOptions plan_options_;
    std::array<WorkflowPlan, 5> plans_;

    std::vector<std::unique_ptr<Runtime>> runtimes_;
    std::unique_ptr<Runtime> mono_;
    ServiceDirectory directory_;
    Placement nodes_;
    BoundedRegister<Ticket> register_;
    std::array<int, kServiceKindCount> next_index_{};

    std::vector<std::unique_ptr<JobState>> jobs_;
    std::vector<std::uint32_t> free_slots_;

    std::unordered_map<std::uint64_t, Rng> link_rngs_;
    DispatchCounters counters_;
    std::optional<Autoscaler> autoscaler_;
    std::vector<ScalingAction> scaling_log_;
    bool ticking_ = false;
    bool started_ = false;
};

}  // namespace offload
