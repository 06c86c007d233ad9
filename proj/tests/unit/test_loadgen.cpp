#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "offload/errors.hpp"
#include "offload/loadgen.hpp"

using namespace offload;

namespace {

// Fails every level after the first.
class FlakyTarget final : public Target {
public:
    std::string mode_name() const override { return "swarm"; }
    std::string site_name() const override { return "edge"; }
    LevelResult run_level(int users, const Workload& w, const SweepPlan& plan) override {
        if (calls_++ > 0) throw TargetUnreachable("connection refused");
        return inner_.run_level(users, w, plan);
    }

private:
    int calls_ = 0;
    SimTarget inner_{default_scenario(Mode::SwarmStyle, Site::Edge), 1};
};

SweepPlan short_plan(std::vector<int> levels) {
    SweepPlan p;
    p.levels = std::move(levels);
    p.warmup_s = 0.5;
    p.measure_s = 2;
    return p;
}

}  // namespace

TEST_CASE("default plan and ranges") {
    auto p = SweepPlan::default_plan();
    CHECK(p.levels.size() == 26);
    CHECK(p.levels.front() == 50);
    CHECK(p.levels.back() == 1300);
    CHECK(SweepPlan::parse_range("10:10:10") == std::vector<int>{10});
    CHECK(SweepPlan::parse_range("50:175:50") == std::vector<int>{50, 100, 150});
    CHECK_THROWS(SweepPlan::parse_range("5:1:1"));
    CHECK_THROWS(SweepPlan::parse_range("1:5"));
    CHECK_THROWS(SweepPlan::parse_range("1:5:0"));
    SweepPlan bad;
    bad.levels = {100, 50};
    CHECK_THROWS(bad.validate());
    bad.levels = {};
    CHECK_THROWS(bad.validate());
}

TEST_CASE("workload fractions") {
    CHECK_NOTHROW(Workload::for_op(Op::Mixed).validate());
    Workload w;
    w.read_fraction = 0.7;
    w.write_fraction = 0.7;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    CHECK(parse_op("write") == Op::Write);
    CHECK_THROWS(parse_op("delete"));
}

TEST_CASE("request kinds follow the op mapping") {
    for (auto [op, kind] : {std::pair{Op::Read, RequestKind::ResourceQuery}, std::pair{Op::Write, RequestKind::ResourceUpdate},
                            std::pair{Op::Estimate, RequestKind::ChannelEstimate}}) {
        Workload w = Workload::for_op(op);
        UserStream s(1, 0, w, 64);
        for (int i = 0; i < 50; ++i) {
            auto o = s.next(static_cast<std::uint64_t>(i));
            CHECK(o.request.kind == kind);
            CHECK(o.pool_index < 64);
            CHECK_NOTHROW(validate_request(o.request));
        }
    }
}

TEST_CASE("user streams are independent of the number of users") {
    Workload w = Workload::for_op(Op::Mixed);
    UserStream a(5, 3, w, 64), b(5, 3, w, 64), c(5, 4, w, 64);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        auto x = a.next(1), y = b.next(1), z = c.next(1);
        CHECK(x.request == y.request);
        CHECK(x.pool_index == y.pool_index);
        differs = differs || x.pool_index != z.pool_index || x.kind != z.kind;
    }
    CHECK(differs);
}

TEST_CASE("key pool entries are distinct and feasible") {
    auto pool = make_key_pool(64, BucketGrid{}, LinkBudgetParams{});
    std::set<ConfigKey> keys;
    for (const auto& e : pool) {
        keys.insert(e.key);
        CHECK(e.key == make_config_key(e.qos, e.state));
    }
    CHECK(keys.size() == 64);
}

TEST_CASE("level recorder windows and in-flight average") {
    LevelRecorder rec(std::chrono::seconds(1), std::chrono::seconds(3));
    rec.issued(Nanos(0));
    rec.completed(std::chrono::milliseconds(500), Nanos(0), Status::Ok, 10);  // before the window
    rec.issued(std::chrono::milliseconds(500));
    rec.completed(std::chrono::milliseconds(1500), std::chrono::milliseconds(500), Status::Ok, 20);
    rec.issued(std::chrono::milliseconds(1500));
    rec.completed(std::chrono::milliseconds(2000), std::chrono::milliseconds(1500), Status::Timeout, 30);
    auto r = rec.finish(std::chrono::seconds(3), "m", "s", "read", 1);
    CHECK(r.record.counts.ok == 1);
    CHECK(r.record.counts.timeout == 1);
    CHECK(r.record.latencies_ms == std::vector<double>{1000.0});
    CHECK(r.record.bytes_total == 50);
    CHECK(r.record.window_s == 2.0);
    CHECK(r.issued == 3);
    CHECK(r.completed == 3);
    // One request in flight from 1.0 s to 2.0 s of the 2 s window.
    CHECK(r.record.mean_in_flight == doctest::Approx(0.5));
}

TEST_CASE("closed loop keeps at most n requests in flight and saturates the target") {
    Scenario sc = default_scenario(Mode::SwarmStyle, Site::Edge);
    SimTarget t(sc, 8);
    auto level = run_level(100, Workload::for_op(Op::Read), t, short_plan({100}));
    CHECK(level.max_in_flight <= 100);
    CHECK(level.record.mean_in_flight >= 0.9 * 100);
    CHECK(level.issued == level.completed);
    CHECK(level.record.counts.total() > 0);
}

TEST_CASE("c=4, 10 ms service, 100 users saturates at 400 rps") {
    Scenario sc = default_scenario(Mode::SwarmStyle, Site::Edge);
    sc.link.one_way_delay = Distribution::constant(0);
    sc.overhead_ms = 0;
    sc.service_times[kind_index(ServiceKind::Read)] = Distribution::exponential(10.0);
    for (auto& s : sc.ssi.services)
        if (s.service_kind == ServiceKind::Read) {
            s.initial_replicas = 1;
            s.concurrency = 4;
        }
    sc.ssi.dynamic[ServiceKind::Read].current_replicas = 1;
    SimTarget t(sc, 8);
    SweepPlan plan = short_plan({100});
    plan.measure_s = 30;
    auto row = aggregate(run_level(100, Workload::for_op(Op::Read), t, plan).record);
    CHECK(row.rps == doctest::Approx(400.0).epsilon(0.03));
}

TEST_CASE("sweep emits one row per level, incrementally") {
    auto dir = std::filesystem::temp_directory_path() / ("offload-lg-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    SimTarget t(default_scenario(Mode::SwarmStyle, Site::Edge), 1);
    auto out = run_sweep(short_plan({50, 100}), Workload::for_op(Op::Read), t, dir / "s.csv");
    REQUIRE(out.report.rows.size() == 2);
    CHECK(out.report.rows[0].users == 50);
    CHECK(out.report.rows[1].users == 100);
    CHECK(read_csv(dir / "s.csv") == out.report.rows);
    CHECK(out.errors.empty());
}

TEST_CASE("unreachable target marks the level partial and the sweep continues") {
    auto dir = std::filesystem::temp_directory_path() / ("offload-lg-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    FlakyTarget t;
    auto out = run_sweep(short_plan({10, 20, 30}), Workload::for_op(Op::Read), t, dir / "flaky.csv");
    CHECK(out.report.rows.size() == 3);
    CHECK(out.errors.size() == 2);
    CHECK(out.levels[1].record.partial);
    CHECK(read_csv(dir / "flaky.csv").size() == 3);
}

TEST_CASE("same seed, same CSV bytes") {
    auto dir = std::filesystem::temp_directory_path() / ("offload-lg-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    auto run = [&](const std::string& name, std::uint64_t seed) {
        SimTarget t(default_scenario(Mode::KubeStyle, Site::Cloud), seed);
        run_sweep(short_plan({20, 40}), Workload::for_op(Op::Mixed), t, dir / name);
        std::ifstream in(dir / name);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    CHECK(run("a.csv", 3) == run("b.csv", 3));
}

TEST_CASE("endpoint parsing") {
    CHECK(parse_endpoint("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
    CHECK(parse_endpoint("http://localhost:9/") == std::pair<std::string, int>{"localhost", 9});
    CHECK(parse_endpoint("nohost") == std::pair<std::string, int>{"nohost", 80});
    CHECK_THROWS(parse_endpoint("h:0"));
    CHECK_THROWS(parse_endpoint(":80"));
}

TEST_CASE("live target against a closed port is unreachable") {
    CHECK_THROWS_AS(LiveTarget("127.0.0.1", 1), TargetUnreachable);
}
