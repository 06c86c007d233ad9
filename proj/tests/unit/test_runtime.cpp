#include <doctest.h>

#include <set>
#include <sstream>

#include "offload/dispatcher.hpp"
#include "offload/errors.hpp"
#include "offload/loadgen.hpp"
#include "offload/metrics.hpp"

using namespace offload;
using std::chrono::milliseconds;

namespace {

Scenario constant_scenario(Mode m, double service_ms, double delay_ms) {
    Scenario sc = default_scenario(m, Site::Edge);
    for (auto& d : sc.service_times) d = Distribution::constant(service_ms);
    sc.link.one_way_delay = Distribution::constant(delay_ms);
    sc.overhead_ms = 0;
    return sc;
}

ConfigKey stored_key(int i) {
    ConfigKey k;
    k.buckets = {30, i, 4, 4, 9, -3, 10};
    return k;
}

struct Rig {
    Scenario sc;
    SimExecutor ex;
    ConfigStore store;
    std::unique_ptr<Dispatcher> d;
    std::vector<Outcome> outcomes;
    std::uint64_t next_id = 1;

    explicit Rig(Scenario s, std::uint64_t seed = 1) : sc(std::move(s)) {
        for (int i = 0; i < 8; ++i) store.write(stored_key(i), ChannelConfig{}, Nanos(0));
        d = std::make_unique<Dispatcher>(sc, ex, store, nullptr, seed);
        d->start();
    }

    void submit(RequestKind kind, std::optional<ConfigKey> key = stored_key(0), double deadline_ms = 30000,
                std::uint64_t user = 0) {
        Job job;
        job.request.id = next_id++;
        job.request.kind = kind;
        job.request.deadline_ms = deadline_ms;
        job.key = key;
        if (kind == RequestKind::ResourceUpdate) job.payload = ChannelConfig{Modulation::QPSK};
        job.user = user;
        d->submit(std::move(job), [this](Outcome o) { outcomes.push_back(std::move(o)); });
    }

    void drain() {
        d->stop_ticks();
        ex.run();
    }

    std::size_t count(Status s, RequestKind kind_filter, const std::map<std::uint64_t, RequestKind>& kinds) const {
        std::size_t n = 0;
        for (const auto& o : outcomes)
            if (o.response.status == s && kinds.at(o.response.id) == kind_filter) ++n;
        return n;
    }
};

std::map<Status, int> tally(const std::vector<Outcome>& v) {
    std::map<Status, int> m;
    for (const auto& o : v) ++m[o.response.status];
    return m;
}

}  // namespace

TEST_CASE("one request with constant service and delay takes exactly 20 ms") {
    for (Mode m : {Mode::Monolithic, Mode::SwarmStyle, Mode::KubeStyle}) {
        Rig rig(constant_scenario(m, 10.0, 5.0));
        rig.submit(RequestKind::ResourceQuery);
        rig.drain();
        REQUIRE(rig.outcomes.size() == 1);
        const auto& o = rig.outcomes[0];
        CHECK(o.response.status == Status::Ok);
        CHECK(o.delivered_at - o.submitted_at == milliseconds(20));
        CHECK(o.response.payload_bytes == o.body.size());
    }
}

TEST_CASE("closed loop with one user at 20 ms gives 50 rps") {
    SimTarget t(constant_scenario(Mode::SwarmStyle, 10.0, 5.0), 3);
    SweepPlan plan;
    plan.levels = {1};
    plan.warmup_s = 1;
    plan.measure_s = 10;
    auto level = run_level(1, Workload::for_op(Op::Read), t, plan);
    auto row = aggregate(level.record);
    CHECK(row.mean_ms == 20.0);
    CHECK(row.p99_ms == 20.0);
    CHECK(row.rps == doctest::Approx(50.0).epsilon(0.05));
    CHECK(row.Bps == static_cast<double>(level.record.bytes_total) / level.record.window_s);
}

TEST_CASE("zero users produce an empty record") {
    SimTarget t(default_scenario(Mode::SwarmStyle, Site::Edge), 3);
    SweepPlan plan;
    plan.levels = {0};
    auto level = run_level(0, Workload::for_op(Op::Read), t, plan);
    CHECK(level.record.latencies_ms.empty());
    CHECK(level.record.counts.total() == 0);
}

TEST_CASE("idle ChannelEstimate returns a configuration in every mode, identically") {
    std::set<std::string> configs;
    for (Mode m : {Mode::Monolithic, Mode::SwarmStyle, Mode::KubeStyle}) {
        Rig rig(default_scenario(m, Site::Edge));
        rig.submit(RequestKind::ChannelEstimate, std::nullopt);
        rig.drain();
        REQUIRE(rig.outcomes.size() == 1);
        CHECK(rig.outcomes[0].response.status == Status::Ok);
        REQUIRE(rig.outcomes[0].response.config);
        configs.insert(Json(*rig.outcomes[0].response.config).dump());
        // The miss path wrote the estimate back.
        CHECK(rig.store.stats().write_count == 9);
    }
    CHECK(configs.size() == 1);
}

TEST_CASE("cache hit skips the estimate and write steps") {
    Rig rig(default_scenario(Mode::SwarmStyle, Site::Edge));
    rig.submit(RequestKind::ChannelEstimate, std::nullopt);
    rig.drain();
    auto writes = rig.store.stats().write_count;
    rig.submit(RequestKind::ChannelEstimate, std::nullopt);
    rig.drain();
    CHECK(rig.store.stats().write_count == writes);
    CHECK(Json(*rig.outcomes[0].response.config).dump() == Json(*rig.outcomes[1].response.config).dump());
}

TEST_CASE("full register rejects") {
    Scenario sc = constant_scenario(Mode::SwarmStyle, 10.0, 0.0);
    for (auto& s : sc.ssi.services) {
        s.initial_replicas = 1;
        s.concurrency = 1;
        sc.ssi.dynamic[s.service_kind].current_replicas = 1;
    }
    sc.ssi.limits.register_capacity = 2;
    Rig rig(sc);
    for (int i = 0; i < 5; ++i) rig.submit(RequestKind::ResourceQuery);
    rig.drain();
    auto t = tally(rig.outcomes);
    CHECK(t[Status::Ok] == 3);
    CHECK(t[Status::Rejected] == 2);
    CHECK(rig.d->register_high_water(ServiceKind::Read) == 2);
}

TEST_CASE("deadline turns a stuck step into a Timeout") {
    Rig rig(constant_scenario(Mode::SwarmStyle, 2000.0, 5.0));
    rig.submit(RequestKind::ResourceQuery, stored_key(0), 1000.0);
    rig.drain();
    REQUIRE(rig.outcomes.size() == 1);
    const auto& o = rig.outcomes[0];
    CHECK(o.response.status == Status::Timeout);
    // Arrival at 5 ms, deadline passes 1 ns after 1005 ms, 5 ms back.
    CHECK(o.delivered_at == milliseconds(1010) + Nanos(1));
    CHECK(rig.d->counters().timeout == 1);
}

TEST_CASE("completion within the deadline is Ok") {
    Rig rig(constant_scenario(Mode::KubeStyle, 400.0, 0.0));
    rig.submit(RequestKind::ResourceQuery, stored_key(0), 1000.0);
    rig.drain();
    CHECK(rig.outcomes.at(0).response.status == Status::Ok);
}

TEST_CASE("completion and deadline in the same instant emit one response") {
    // The step ends exactly when the deadline timer fires.
    Rig rig(constant_scenario(Mode::SwarmStyle, 10.000001, 0.0));
    rig.submit(RequestKind::ResourceQuery, stored_key(0), 10.0);
    rig.drain();
    CHECK(rig.outcomes.size() == 1);
    CHECK(rig.d->counters().finalized() == 1);
}

TEST_CASE("every request gets exactly one response under deadline pressure") {
    for (Mode m : {Mode::Monolithic, Mode::SwarmStyle, Mode::KubeStyle}) {
        Scenario sc = default_scenario(m, Site::Edge);
        sc.service_times[kind_index(ServiceKind::Read)] = Distribution::exponential(5.0);
        Rig rig(sc, 77);
        for (int i = 0; i < 400; ++i) rig.submit(RequestKind::ResourceQuery, stored_key(i % 8), 5.0 + i % 50, i);
        rig.drain();
        std::set<std::uint64_t> ids;
        for (const auto& o : rig.outcomes) CHECK(ids.insert(o.response.id).second);
        CHECK(ids.size() == 400);
        const auto& c = rig.d->counters();
        CHECK(c.submitted == c.finalized());
        CHECK(c.timeout > 0);
        CHECK(c.ok > 0);
    }
}

TEST_CASE("read retry waits out the interval before giving up") {
    Scenario sc = constant_scenario(Mode::SwarmStyle, 1.0, 0.0);
    sc.read_retry.interval = milliseconds(100);
    sc.read_retry.max_retries = 3;
    Rig rig(sc);
    ConfigKey missing;
    missing.buckets = {1, 1, 1, 1, 1, 1, 1};
    rig.submit(RequestKind::ResourceQuery, missing);
    rig.drain();
    REQUIRE(rig.outcomes.size() == 1);
    CHECK(rig.outcomes[0].delivered_at >= milliseconds(300 + 4));
    CHECK_FALSE(rig.outcomes[0].response.config);
}

TEST_CASE("read retry picks up a record written meanwhile") {
    Scenario sc = constant_scenario(Mode::KubeStyle, 1.0, 0.0);
    sc.read_retry.interval = milliseconds(100);
    Rig rig(sc);
    ConfigKey late;
    late.buckets = {2, 2, 2, 2, 2, 2, 2};
    rig.submit(RequestKind::ResourceQuery, late);
    rig.ex.at(milliseconds(50), "writer", [&] { rig.store.write(late, ChannelConfig{Modulation::QAM16}, rig.ex.now()); });
    rig.drain();
    REQUIRE(rig.outcomes.size() == 1);
    REQUIRE(rig.outcomes[0].response.config);
    CHECK(rig.outcomes[0].response.config->modulation == Modulation::QAM16);
    CHECK(rig.outcomes[0].delivered_at == milliseconds(102));
}

TEST_CASE("killing the write instance leaves reads untouched") {
    for (Mode m : {Mode::SwarmStyle, Mode::KubeStyle}) {
        Rig rig(default_scenario(m, Site::Edge));
        rig.d->inject_failure("write-1");
        std::map<std::uint64_t, RequestKind> kinds;
        for (int i = 0; i < 100; ++i) {
            RequestKind k = i % 2 ? RequestKind::ResourceUpdate : RequestKind::ResourceQuery;
            kinds[rig.next_id] = k;
            rig.submit(k, stored_key(i % 8), 30000, i);
        }
        rig.drain();
        CHECK(rig.count(Status::Ok, RequestKind::ResourceQuery, kinds) == 50);
        CHECK(rig.count(Status::Failed, RequestKind::ResourceUpdate, kinds) == 50);
    }
}

TEST_CASE("killing the monolithic node fails every kind") {
    Rig rig(default_scenario(Mode::Monolithic, Site::Edge));
    for (int i = 0; i < 30; ++i) rig.submit(i % 2 ? RequestKind::ResourceUpdate : RequestKind::ResourceQuery);
    // Some requests are in service, some queued, some still on the link.
    rig.ex.run_until(Nanos(1500000));
    rig.d->inject_failure("monolith");
    for (int i = 0; i < 10; ++i) rig.submit(RequestKind::ChannelEstimate, std::nullopt);
    rig.drain();
    auto t = tally(rig.outcomes);
    CHECK(t[Status::Failed] == 40);
    CHECK(t[Status::Ok] == 0);
}

TEST_CASE("killing the only estimate instance fails misses only") {
    Rig rig(default_scenario(Mode::SwarmStyle, Site::Edge));
    rig.d->inject_failure("estimate-1");
    std::map<std::uint64_t, RequestKind> kinds;
    for (int i = 0; i < 20; ++i) {
        RequestKind k = i % 2 ? RequestKind::ChannelEstimate : RequestKind::ResourceQuery;
        kinds[rig.next_id] = k;
        rig.submit(k, k == RequestKind::ChannelEstimate ? std::nullopt : std::optional(stored_key(0)));
    }
    rig.drain();
    CHECK(rig.count(Status::Ok, RequestKind::ResourceQuery, kinds) == 10);
    CHECK(rig.count(Status::Failed, RequestKind::ChannelEstimate, kinds) == 10);
}

TEST_CASE("unknown failure target") {
    Rig rig(default_scenario(Mode::SwarmStyle, Site::Edge));
    CHECK_THROWS_AS(rig.d->inject_failure("nope-9"), UnknownTarget);
}

TEST_CASE("node failure downs every hosted instance") {
    Rig rig(default_scenario(Mode::SwarmStyle, Site::Edge));
    auto node = rig.d->nodes().at(0).node_id;
    rig.d->inject_failure(node);
    for (const auto& v : rig.d->runtimes())
        if (v.node_id == node) CHECK(v.down);
}

TEST_CASE("instances never exceed their concurrency") {
    for (Mode m : {Mode::Monolithic, Mode::SwarmStyle, Mode::KubeStyle}) {
        SimTarget t(default_scenario(m, Site::Edge), 5);
        SweepPlan plan;
        plan.levels = {200};
        plan.warmup_s = 1;
        plan.measure_s = 3;
        bool checked = false;
        t.on_finish = [&](const Dispatcher& d) {
            for (const auto& v : d.runtimes()) {
                CHECK(v.max_in_service <= v.concurrency);
                checked = checked || v.max_in_service == v.concurrency;
            }
        };
        run_level(200, Workload::for_op(Op::Mixed), t, plan);
        CHECK(checked);
    }
}

TEST_CASE("event times never decrease and runs are reproducible") {
    auto trace_of = [](std::uint64_t seed) {
        std::ostringstream os;
        SimTarget t(default_scenario(Mode::KubeStyle, Site::Cloud), seed);
        t.trace = &os;
        SweepPlan plan;
        plan.levels = {20};
        plan.warmup_s = 0.5;
        plan.measure_s = 1;
        run_level(20, Workload::for_op(Op::Mixed), t, plan);
        return os.str();
    };
    auto a = trace_of(9);
    CHECK(a == trace_of(9));
    CHECK(a != trace_of(10));
    std::istringstream in(a);
    long long t = 0, prev = -1;
    std::string seq, tag;
    std::size_t n = 0;
    while (in >> t >> seq >> tag) {
        CHECK(t >= prev);
        prev = t;
        ++n;
    }
    CHECK(n > 1000);
}

TEST_CASE("kube autoscaler adds read replicas under backlog and stays in bounds") {
    Scenario sc = default_scenario(Mode::KubeStyle, Site::Edge);
    sc.service_times[kind_index(ServiceKind::Read)] = Distribution::exponential(20.0);
    SimTarget t(sc, 2);
    SweepPlan plan;
    plan.levels = {300};
    plan.warmup_s = 5;
    plan.measure_s = 5;
    std::vector<ScalingAction> log;
    std::size_t nodes = 0;
    int reads = 0;
    t.on_finish = [&](const Dispatcher& d) {
        log = d.scaling_log();
        nodes = d.nodes().size();
        for (const auto& v : d.runtimes()) reads += v.kind == ServiceKind::Read && !v.removed;
    };
    run_level(300, Workload::for_op(Op::Read), t, plan);
    REQUIRE_FALSE(log.empty());
    CHECK(log.front().kind == ServiceKind::Read);
    CHECK(log.front().delta == 1);
    for (const auto& a : log) {
        CHECK(a.replicas_after >= sc.ssi.min_replicas(a.kind));
        CHECK(a.replicas_after <= sc.ssi.max_replicas(a.kind));
    }
    CHECK(reads == sc.ssi.max_replicas(ServiceKind::Read));
    CHECK(nodes >= 1);
}

TEST_CASE("kube downing one of two reads halves read capacity") {
    Scenario sc = constant_scenario(Mode::KubeStyle, 1.0, 0.0);
    sc.service_times[kind_index(ServiceKind::Read)] = Distribution::exponential(10.0);
    for (auto& s : sc.ssi.services)
        if (s.service_kind == ServiceKind::Read) {
            s.initial_replicas = 2;
            s.concurrency = 1;
        }
    sc.ssi.dynamic[ServiceKind::Read].current_replicas = 2;
    sc.ssi.limits.min_replicas_per_kind[ServiceKind::Read] = 2;
    sc.ssi.limits.max_replicas_per_kind[ServiceKind::Read] = 2;
    SweepPlan plan;
    plan.levels = {16};
    plan.warmup_s = 5;
    plan.measure_s = 60;

    SimTarget healthy(sc, 4);
    auto before = aggregate(run_level(16, Workload::for_op(Op::Read), healthy, plan).record);
    SimTarget degraded(sc, 4);
    degraded.on_start = [](Dispatcher& d, SimExecutor&) { d.inject_failure("read-2"); };
    auto after = aggregate(run_level(16, Workload::for_op(Op::Read), degraded, plan).record);

    CHECK(after.err == 0);
    CHECK(before.rps == doctest::Approx(finite_population_oracle(16, 2, 10.0, 0.0)).epsilon(0.05));
    CHECK(after.rps == doctest::Approx(finite_population_oracle(16, 1, 10.0, 0.0)).epsilon(0.05));
}

TEST_CASE("inconsistent monolithic scenario is a ConfigError") {
    Scenario sc = default_scenario(Mode::Monolithic, Site::Edge);
    sc.ssi.node_template.cpu_millicores_total = 100;
    SimExecutor ex;
    ConfigStore store;
    Dispatcher d(sc, ex, store, nullptr, 1);
    CHECK_THROWS_AS(d.start(), ConfigError);
}
