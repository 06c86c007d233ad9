#pragma once

// Closed-loop tester: n users each issue the next request as soon as the
// previous response arrives (plus optional think time). The same recorder
// samples simulated and live targets.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "offload/dispatcher.hpp"
#include "offload/metrics.hpp"
#include "offload/random.hpp"
#include "offload/scenario.hpp"

namespace offload {

enum class Op { Read, Write, Estimate, Mixed };
std::string_view to_string(Op op);
Op parse_op(std::string_view s);

struct Workload {
    std::string name = "read";
    double read_fraction = 1.0;
    double write_fraction = 0.0;
    double estimate_fraction = 0.0;
    Distribution think = Distribution::constant(0.0);
    std::size_t key_pool = 64;
    double deadline_ms = 30000.0;
    std::uint64_t seed = 1;

    static Workload for_op(Op op);
    // Throws std::invalid_argument unless fractions lie in [0,1] and sum to 1.
    void validate() const;
};

struct SweepPlan {
    std::vector<int> levels;
    double warmup_s = 5.0;
    double measure_s = 10.0;

    // 50 to 1300 users in steps of 50.
    static SweepPlan default_plan();
    // "start:end:step" inclusive of end when reached.
    static std::vector<int> parse_range(std::string_view range);
    void validate() const;
};

// Pre-stored configurations used by read and write operations.
struct PoolEntry {
    QosRequirements qos;
    ChannelState state;
    ConfigKey key;
    ChannelConfig config;
};
std::vector<PoolEntry> make_key_pool(std::size_t size, const BucketGrid& grid, const LinkBudgetParams& params);

enum class OpKind { Read, Write, Estimate };

struct Operation {
    OpKind kind = OpKind::Read;
    std::size_t pool_index = 0;
    RequestEnvelope request;
};

// Request stream of one user, with its own random substream.
class UserStream {
public:
    UserStream(std::uint64_t seed, std::uint64_t user, const Workload& workload, std::size_t pool_size);
    Operation next(std::uint64_t request_id);
    Nanos think();

private:
    const Workload* workload_;
    std::size_t pool_size_;
    Rng rng_;
};

struct LevelResult {
    MetricsRecord record;
    // Totals over the whole level including warmup and drain.
    std::uint64_t issued = 0;
    std::uint64_t completed = 0;
    StatusCounts all;
    std::uint64_t connection_errors = 0;
    int max_in_flight = 0;
    std::string error;
};

class LevelRecorder {
public:
    LevelRecorder(Nanos window_start, Nanos window_end);

    void issued(Nanos now);
    void completed(Nanos now, Nanos issued_at, Status status, std::size_t bytes);
    void connection_error() { ++result_.connection_errors; }
    int in_flight() const { return in_flight_; }
    LevelResult finish(Nanos now, std::string mode, std::string site, std::string op, int users);

private:
    void advance(Nanos now);

    Nanos start_, end_;
    Nanos last_{0};
    int in_flight_ = 0;
    double area_ns_ = 0.0;
    LevelResult result_;
};

class Target {
public:
    virtual ~Target() = default;
    virtual std::string mode_name() const = 0;
    virtual std::string site_name() const = 0;
    virtual LevelResult run_level(int users, const Workload& workload, const SweepPlan& plan) = 0;
};

// In-process discrete-event target. Each level is an independent simulation
// seeded from (seed, users).
class SimTarget final : public Target {
public:
    SimTarget(Scenario scenario, std::uint64_t seed);

    std::string mode_name() const override { return std::string(to_string(scenario_.mode)); }
    std::string site_name() const override { return std::string(to_string(scenario_.site)); }
    LevelResult run_level(int users, const Workload& workload, const SweepPlan& plan) override;

    // Called after the cluster starts and before any user issues a request.
    std::function<void(Dispatcher&, SimExecutor&)> on_start;
    // Called after the level drains.
    std::function<void(const Dispatcher&)> on_finish;
    std::ostream* trace = nullptr;

private:
    Scenario scenario_;
    std::uint64_t seed_;
};

// Socket target speaking the live HTTP interface.
class LiveTarget final : public Target {
public:
    // Throws TargetUnreachable if the endpoint does not answer /info.
    LiveTarget(std::string host, int port);

    std::string mode_name() const override { return mode_; }
    std::string site_name() const override { return site_; }
    LevelResult run_level(int users, const Workload& workload, const SweepPlan& plan) override;

private:
    void prime(const Workload& workload);

    std::string host_;
    int port_;
    std::string mode_;
    std::string site_;
    BucketGrid grid_;
    LinkBudgetParams params_;
    std::size_t primed_ = 0;
};

// "host:port" or "http://host:port".
std::pair<std::string, int> parse_endpoint(std::string_view url);

LevelResult run_level(int users, const Workload& workload, Target& target, const SweepPlan& plan);

struct SweepOutput {
    SweepReport report;
    std::vector<LevelResult> levels;
    std::vector<std::string> errors;
};

// Runs every level in order; a failing level is recorded as partial and the
// sweep continues. Rows are appended to `csv` as each level finishes.
SweepOutput run_sweep(const SweepPlan& plan, const Workload& workload, Target& target,
                      const std::optional<std::filesystem::path>& csv = std::nullopt,
                      const std::function<void(const SummaryRow&)>& progress = {});

}  // namespace offload
