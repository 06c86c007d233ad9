// offload: serve, benchmark and compare the orchestration modes.
// Exit codes: 0 success, 2 configuration error, 3 target error.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <pthread.h>

#include "offload/errors.hpp"
#include "offload/loadgen.hpp"
#include "offload/metrics.hpp"
#include "offload/server.hpp"
#include "offload/suite.hpp"

using namespace offload;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitTarget = 3;

void print_row(const SummaryRow& r) {
    std::printf("%-10s %-5s %-8s %6d %8llu %6llu %10.3f %10.3f %10.3f %10.3f %10.1f %12.0f\n", r.mode.c_str(),
                r.site.c_str(), r.op.c_str(), r.users, static_cast<unsigned long long>(r.ok),
                static_cast<unsigned long long>(r.err), r.mean_ms, r.p50_ms, r.p95_ms, r.p99_ms, r.rps, r.Bps);
    std::fflush(stdout);
}

void print_header() {
    std::printf("%-10s %-5s %-8s %6s %8s %6s %10s %10s %10s %10s %10s %12s\n", "mode", "site", "op", "users", "ok",
                "err", "mean_ms", "p50_ms", "p95_ms", "p99_ms", "rps", "Bps");
}

std::filesystem::path default_out() {
    const char* env = std::getenv("OFFLOAD_BENCH_OUT");
    return env && *env ? std::filesystem::path(env) : std::filesystem::path("out");
}

std::uint64_t resolve_seed(const Scenario& sc, const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (sc.seed) return *sc.seed;
    throw ConfigError("simulation needs a seed: pass --seed or set \"seed\" in the scenario");
}

int cmd_serve(const std::string& scenario_path, const std::string& bind, std::optional<std::uint64_t> seed,
              double grace_s) {
    Scenario sc = load_scenario(scenario_path);
    BindAddress addr = parse_bind(bind);

    // Handle SIGINT/SIGTERM synchronously; worker threads inherit the mask.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    LiveServer server(sc, seed.value_or(sc.seed.value_or(1)));
    server.start(addr);
    std::printf("serving %s (%s, %s) on %s:%d\n", sc.name.c_str(), std::string(to_string(sc.mode)).c_str(),
                std::string(to_string(sc.site)).c_str(), addr.host.c_str(), server.port());
    std::fflush(stdout);
    int sig = 0;
    sigwait(&set, &sig);
    std::fprintf(stderr, "signal %d: draining\n", sig);
    server.shutdown(from_ms(grace_s * 1000.0));
    auto st = server.stats();
    std::fprintf(stderr, "served %llu requests (ok %llu, timeout %llu, rejected %llu, failed %llu)\n",
                 static_cast<unsigned long long>(st.requests), static_cast<unsigned long long>(st.dispatch.ok),
                 static_cast<unsigned long long>(st.dispatch.timeout),
                 static_cast<unsigned long long>(st.dispatch.rejected),
                 static_cast<unsigned long long>(st.dispatch.failed));
    return 0;
}

struct BenchArgs {
    std::string sim;
    std::string url;
    std::string users = "50:1300:50";
    std::string op = "read";
    std::string out;
    std::optional<std::uint64_t> seed;
    double warmup = 5.0;
    double measure = 10.0;
    double think_ms = 0.0;
    double deadline_ms = 30000.0;
};

int cmd_bench(const BenchArgs& a) {
    SweepPlan plan;
    plan.levels = SweepPlan::parse_range(a.users);
    plan.warmup_s = a.warmup;
    plan.measure_s = a.measure;
    plan.validate();
    Workload w = Workload::for_op(parse_op(a.op));
    w.think = Distribution::constant(a.think_ms);
    w.deadline_ms = a.deadline_ms;
    w.validate();

    std::unique_ptr<Target> target;
    if (!a.sim.empty()) {
        Scenario sc = load_scenario(a.sim);
        target = std::make_unique<SimTarget>(sc, resolve_seed(sc, a.seed));
    } else {
        auto [host, port] = parse_endpoint(a.url);
        if (a.seed) w.seed = *a.seed;
        target = std::make_unique<LiveTarget>(host, port);
    }
    std::filesystem::path out = a.out.empty() ? default_out() : std::filesystem::path(a.out);
    std::string stem = target->mode_name() + "_" + target->site_name() + "_" + w.name;
    print_header();
    auto result = run_sweep(plan, w, *target, out / (stem + ".csv"), print_row);
    if (!result.report.rows.empty()) emit_svg(result.report.rows, out / (stem + ".svg"));
    std::printf("knee_users: %s\n", result.report.knee_users ? std::to_string(*result.report.knee_users).c_str()
                                                             : "none");
    std::printf("wrote %s and %s\n", (out / (stem + ".csv")).c_str(), (out / (stem + ".svg")).c_str());
    for (const auto& e : result.errors) std::fprintf(stderr, "error: %s\n", e.c_str());
    return result.errors.empty() ? 0 : kExitTarget;
}

int cmd_compare(const std::vector<std::string>& csvs, const std::string& out_arg, double alpha) {
    std::vector<Series> series;
    for (const auto& path : csvs) {
        auto rows = read_csv(path);
        if (rows.empty()) throw SchemaMismatch(path + ": no data rows");
        // One file may hold several curves; split on (mode, site, op).
        for (const auto& r : rows) {
            std::string label = series_label(r);
            auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.label == label; });
            if (it == series.end()) series.push_back(Series{label, {r}});
            else it->rows.push_back(r);
        }
    }
    std::filesystem::path out = out_arg.empty() ? default_out() : std::filesystem::path(out_arg);
    write_text(out / "compare.svg", render_svg(series, "comparison"));
    std::string table = knee_table_csv(series, alpha);
    write_text(out / "knees.csv", table);
    std::printf("%-28s %s\n", "curve", "knee_users");
    for (const auto& s : series) {
        auto k = knee_detect(s.rows, alpha);
        std::printf("%-28s %s\n", s.label.c_str(), k ? std::to_string(*k).c_str() : "none");
    }
    std::printf("wrote %s and %s\n", (out / "compare.svg").c_str(), (out / "knees.csv").c_str());
    return 0;
}

int cmd_sim(const std::string& scenario_path, std::optional<std::uint64_t> seed, int users, const std::string& op,
            double warmup, double measure, const std::string& trace_path, const std::string& csv_path) {
    Scenario sc = load_scenario(scenario_path);
    SimTarget target(sc, resolve_seed(sc, seed));
    std::ofstream trace;
    if (!trace_path.empty()) {
        trace.open(trace_path, std::ios::binary | std::ios::trunc);
        if (!trace) throw ConfigError("cannot write trace " + trace_path);
        target.trace = &trace;
    }
    SweepPlan plan;
    plan.levels = {users};
    plan.warmup_s = warmup;
    plan.measure_s = measure;
    plan.validate();
    Workload w = Workload::for_op(parse_op(op));
    auto level = run_level(users, w, target, plan);
    auto row = aggregate(level.record);
    print_header();
    print_row(row);
    if (!csv_path.empty()) emit_csv({row}, csv_path);
    return 0;
}

int cmd_suite(const std::string& path, const std::string& out_arg, std::optional<std::uint64_t> seed) {
    Suite suite = load_suite(path);
    if (seed) suite.seed = *seed;
    std::filesystem::path out = out_arg.empty() ? default_out() : std::filesystem::path(out_arg);
    print_header();
    auto runs = run_suite(suite, out, [](const SuiteRun&, const SummaryRow& r) { print_row(r); });
    std::printf("\n%-28s %s\n", "curve", "knee_users");
    for (const auto& r : runs) {
        if (r.output.report.rows.empty()) continue;
        std::printf("%-28s %s\n", series_label(r.output.report.rows.front()).c_str(),
                    r.output.report.knee_users ? std::to_string(*r.output.report.knee_users).c_str() : "none");
    }
    std::printf("wrote reports to %s\n", out.c_str());
    return 0;
}

int cmd_compact(const std::string& log) {
    if (!std::filesystem::exists(log)) throw ConfigError("store log not found: " + log);
    auto store = recover(log);
    for (const auto& w : store->warnings()) std::fprintf(stderr, "warning: %s\n", w.c_str());
    store->compact();
    std::printf("compacted %s: %llu records\n", log.c_str(),
                static_cast<unsigned long long>(store->stats().record_count));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Edge/cloud channel-configuration control plane: serve, benchmark, compare"};
    app.require_subcommand(1);

    std::string scenario, bind = "127.0.0.1:8080";
    std::optional<std::uint64_t> seed;
    double grace = 30.0;
    auto* serve = app.add_subcommand("serve", "Serve a scenario over HTTP");
    serve->add_option("--scenario", scenario, "Scenario JSON")->required();
    serve->add_option("--bind", bind, "host:port");
    serve->add_option("--seed", seed, "Seed for service-time streams");
    serve->add_option("--grace", grace, "Seconds to drain in-flight requests on shutdown");

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "Sweep concurrency against a simulated or live target");
    auto* sim_opt = bench->add_option("--sim", ba.sim, "Scenario JSON to simulate");
    auto* url_opt = bench->add_option("--url", ba.url, "Live endpoint host:port");
    sim_opt->excludes(url_opt);
    bench->add_option("--users", ba.users, "start:end:step");
    bench->add_option("--op", ba.op, "read|write|estimate|mixed");
    bench->add_option("--out", ba.out, "Output directory (default $OFFLOAD_BENCH_OUT or out/)");
    bench->add_option("--seed", ba.seed, "Master seed");
    bench->add_option("--warmup", ba.warmup, "Warmup seconds per level");
    bench->add_option("--measure", ba.measure, "Measured seconds per level");
    bench->add_option("--think-ms", ba.think_ms, "Think time between a response and the next request");
    bench->add_option("--deadline-ms", ba.deadline_ms, "Per-request deadline");

    std::vector<std::string> csvs;
    std::string compare_out;
    double alpha = 3.0;
    auto* compare = app.add_subcommand("compare", "Overlay sweep CSVs and tabulate knees");
    compare->add_option("csv", csvs, "Sweep CSV files")->required();
    compare->add_option("--out", compare_out, "Output directory");
    compare->add_option("--alpha", alpha, "Knee threshold multiple of the baseline latency");

    int sim_users = 1;
    std::string sim_op = "read", trace, sim_csv;
    double sim_warmup = 0.0, sim_measure = 10.0;
    auto* sim = app.add_subcommand("sim", "Run one simulated level, optionally writing the event trace");
    sim->add_option("--scenario", scenario, "Scenario JSON")->required();
    sim->add_option("--seed", seed, "Master seed");
    sim->add_option("--users", sim_users, "Concurrent users");
    sim->add_option("--op", sim_op, "read|write|estimate|mixed");
    sim->add_option("--warmup", sim_warmup, "Warmup seconds");
    sim->add_option("--measure", sim_measure, "Measured seconds");
    sim->add_option("--trace", trace, "Event trace output file");
    sim->add_option("--csv", sim_csv, "Summary CSV output file");

    std::string suite_path = "configs/paper-analogue.json", suite_out;
    auto* suite = app.add_subcommand("suite", "Run a scenario suite (default: the calibrated comparison)");
    suite->add_option("--config", suite_path, "Suite JSON");
    suite->add_option("--out", suite_out, "Output directory");
    suite->add_option("--seed", seed, "Master seed");

    std::string log;
    auto* compact = app.add_subcommand("compact", "Rewrite a store log keeping the latest record per key");
    compact->add_option("--log", log, "Store log path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*serve) return cmd_serve(scenario, bind, seed, grace);
        if (*bench) {
            if (ba.sim.empty() == ba.url.empty()) throw ConfigError("bench needs exactly one of --sim or --url");
            return cmd_bench(ba);
        }
        if (*compare) return cmd_compare(csvs, compare_out, alpha);
        if (*sim) return cmd_sim(scenario, seed, sim_users, sim_op, sim_warmup, sim_measure, trace, sim_csv);
        if (*suite) return cmd_suite(suite_path, suite_out, seed);
        if (*compact) return cmd_compact(log);
    } catch (const TargetUnreachable& e) {
        std::fprintf(stderr, "error: target unreachable: %s\n", e.what());
        return kExitTarget;
    } catch (const BindError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitTarget;
    } catch (const SchemaMismatch& e) {
        std::fprintf(stderr, "error: schema mismatch: %s\n", e.what());
        return kExitConfig;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const InvariantError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
