#include "offload/loadgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "offload/errors.hpp"
#include "offload/estimator.hpp"

namespace offload {

std::string_view to_string(Op op) {
    switch (op) {
        case Op::Read: return "read";
        case Op::Write: return "write";
        case Op::Estimate: return "estimate";
        case Op::Mixed: return "mixed";
    }
    return "?";
}

Op parse_op(std::string_view s) {
    if (s == "read") return Op::Read;
    if (s == "write") return Op::Write;
    if (s == "estimate") return Op::Estimate;
    if (s == "mixed") return Op::Mixed;
    throw std::invalid_argument("unknown op '" + std::string(s) + "'");
}

Workload Workload::for_op(Op op) {
    Workload w;
    w.name = std::string(to_string(op));
    switch (op) {
        case Op::Read: break;
        case Op::Write: w.read_fraction = 0.0, w.write_fraction = 1.0; break;
        case Op::Estimate: w.read_fraction = 0.0, w.estimate_fraction = 1.0; break;
        case Op::Mixed: w.read_fraction = 0.5, w.write_fraction = 0.5; break;
    }
    return w;
}

void Workload::validate() const {
    for (double f : {read_fraction, write_fraction, estimate_fraction})
        if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("operation fractions must lie in [0, 1]");
    if (std::abs(read_fraction + write_fraction + estimate_fraction - 1.0) > 1e-9)
        throw std::invalid_argument("operation fractions must sum to 1");
    if (key_pool == 0) throw std::invalid_argument("key pool must be nonempty");
    if (!(deadline_ms > 0)) throw std::invalid_argument("deadline must be > 0");
}

SweepPlan SweepPlan::default_plan() {
    SweepPlan p;
    for (int n = 50; n <= 1300; n += 50) p.levels.push_back(n);
    return p;
}

std::vector<int> SweepPlan::parse_range(std::string_view range) {
    int v[3];
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
        auto end = i < 2 ? range.find(':', pos) : range.size();
        if (end == std::string_view::npos) throw std::invalid_argument("range must be start:end:step");
        auto part = range.substr(pos, end - pos);
        auto res = std::from_chars(part.data(), part.data() + part.size(), v[i]);
        if (res.ec != std::errc() || res.ptr != part.data() + part.size())
            throw std::invalid_argument("bad number '" + std::string(part) + "' in range");
        pos = end + 1;
    }
    if (v[0] < 0 || v[1] < v[0] || v[2] <= 0) throw std::invalid_argument("range needs 0 <= start <= end, step > 0");
    std::vector<int> out;
    for (int n = v[0]; n <= v[1]; n += v[2]) out.push_back(n);
    return out;
}

void SweepPlan::validate() const {
    if (levels.empty()) throw std::invalid_argument("sweep needs at least one level");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i] < 0) throw std::invalid_argument("user counts must be >= 0");
        if (i > 0 && levels[i] <= levels[i - 1]) throw std::invalid_argument("levels must be strictly increasing");
    }
    if (!(warmup_s >= 0) || !(measure_s > 0)) throw std::invalid_argument("need warmup >= 0 and measure > 0");
}

std::vector<PoolEntry> make_key_pool(std::size_t size, const BucketGrid& grid, const LinkBudgetParams& params) {
    std::vector<PoolEntry> pool;
    pool.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
        PoolEntry e;
        // Distinct buckets: 16 distances x temperature steps, all short-range.
        e.state.distance_m = (static_cast<double>(i % 16) + 0.5) * grid.distance_m;
        e.state.temperature_c = (static_cast<double>(i / 16) + 0.5) * grid.temperature_c;
        e.key = make_config_key(e.qos, e.state, grid);
        auto cfg = derive_config(e.qos, e.state, params);
        if (cfg) {
            e.config = *cfg;
        } else {
            e.config.bandwidth_hz = e.qos.bandwidth_hz;
            e.config.tx_power_dbm = params.tx_power_dbm;
        }
        pool.push_back(e);
    }
    return pool;
}

UserStream::UserStream(std::uint64_t seed, std::uint64_t user, const Workload& workload, std::size_t pool_size)
    : workload_(&workload), pool_size_(pool_size), rng_(derive_seed(seed, "user", user)) {}

Operation UserStream::next(std::uint64_t id) {
    Operation op;
    double u = uniform_open(rng_);
    if (u < workload_->read_fraction) op.kind = OpKind::Read;
    else if (u < workload_->read_fraction + workload_->write_fraction) op.kind = OpKind::Write;
    else op.kind = OpKind::Estimate;
    op.pool_index = static_cast<std::size_t>(uniform_open(rng_) * static_cast<double>(pool_size_));
    op.pool_index = std::min(op.pool_index, pool_size_ - 1);
    op.request.id = id;
    op.request.deadline_ms = workload_->deadline_ms;
    op.request.qos.deadline_ms = workload_->deadline_ms;
    switch (op.kind) {
        case OpKind::Read: op.request.kind = RequestKind::ResourceQuery; break;
        case OpKind::Write: op.request.kind = RequestKind::ResourceUpdate; break;
        case OpKind::Estimate:
            op.request.kind = RequestKind::ChannelEstimate;
            op.request.state.frequency_hz = 0.2e12 + 0.2e12 * uniform_open(rng_);
            op.request.state.distance_m = 1.0 + 9.0 * uniform_open(rng_);
            op.request.state.humidity_pct = 10.0 + 50.0 * uniform_open(rng_);
            op.request.state.temperature_c = 30.0 * uniform_open(rng_);
            break;
    }
    return op;
}

Nanos UserStream::think() { return from_ms(std::max(0.0, workload_->think.sample_ms(rng_))); }

LevelRecorder::LevelRecorder(Nanos window_start, Nanos window_end) : start_(window_start), end_(window_end) {}

void LevelRecorder::advance(Nanos now) {
    Nanos a = std::max(last_, start_), b = std::min(now, end_);
    if (b > a) area_ns_ += static_cast<double>(in_flight_) * static_cast<double>((b - a).count());
    if (now > last_) last_ = now;
}

void LevelRecorder::issued(Nanos now) {
    advance(now);
    ++in_flight_;
    ++result_.issued;
    result_.max_in_flight = std::max(result_.max_in_flight, in_flight_);
    if (now >= start_ && now < end_) ++result_.record.submitted;
}

void LevelRecorder::completed(Nanos now, Nanos issued_at, Status status, std::size_t bytes) {
    advance(now);
    --in_flight_;
    ++result_.completed;
    auto bump = [&](StatusCounts& c) {
        switch (status) {
            case Status::Ok: ++c.ok; break;
            case Status::Timeout: ++c.timeout; break;
            case Status::Rejected: ++c.rejected; break;
            case Status::Failed: ++c.failed; break;
        }
    };
    bump(result_.all);
    if (now < start_ || now >= end_) return;
    bump(result_.record.counts);
    result_.record.bytes_total += bytes;
    if (status == Status::Ok) result_.record.latencies_ms.push_back(to_ms(now - issued_at));
}

LevelResult LevelRecorder::finish(Nanos now, std::string mode, std::string site, std::string op, int users) {
    advance(now);
    LevelResult r = std::move(result_);
    r.record.mode = std::move(mode);
    r.record.site = std::move(site);
    r.record.op = std::move(op);
    r.record.users = users;
    r.record.window_s = to_ms(end_ - start_) / 1000.0;
    r.record.mean_in_flight = end_ > start_ ? area_ns_ / static_cast<double>((end_ - start_).count()) : 0.0;
    result_ = LevelResult{};
    return r;
}

SimTarget::SimTarget(Scenario scenario, std::uint64_t seed) : scenario_(std::move(scenario)), seed_(seed) {}

LevelResult SimTarget::run_level(int users, const Workload& workload, const SweepPlan& plan) {
    workload.validate();
    SimExecutor ex;
    ex.trace_to(trace);
    ConfigStore store;
    std::uint64_t seed = derive_seed(seed_, "level", static_cast<std::uint64_t>(users));
    Dispatcher dispatcher(scenario_, ex, store, nullptr, seed);
    auto pool = make_key_pool(workload.key_pool, scenario_.grid, scenario_.estimator);
    for (const auto& e : pool) store.write(e.key, e.config, Nanos{0});
    dispatcher.start();
    if (on_start) on_start(dispatcher, ex);

    Nanos ws = from_ms(plan.warmup_s * 1000.0);
    Nanos we = ws + from_ms(plan.measure_s * 1000.0);
    LevelRecorder rec(ws, we);
    std::vector<UserStream> streams;
    streams.reserve(static_cast<std::size_t>(users));
    std::uint64_t wseed = derive_seed(seed, "workload", workload.seed);
    for (int u = 0; u < users; ++u) streams.emplace_back(wseed, static_cast<std::uint64_t>(u), workload, pool.size());

    std::uint64_t next_id = 1;
    std::function<void(int)> issue = [&](int u) {
        Nanos now = ex.now();
        if (now >= we) return;
        Operation op = streams[static_cast<std::size_t>(u)].next(next_id++);
        Job job;
        job.request = op.request;
        job.user = static_cast<std::uint64_t>(u);
        if (op.kind != OpKind::Estimate) job.key = pool[op.pool_index].key;
        if (op.kind == OpKind::Write) job.payload = pool[op.pool_index].config;
        rec.issued(now);
        dispatcher.submit(std::move(job), [&, u, now](Outcome out) {
            rec.completed(ex.now(), now, out.response.status, out.body.size());
            Nanos think = streams[static_cast<std::size_t>(u)].think();
            if (think.count() == 0) issue(u);
            else ex.after(think, "think", [&issue, u] { issue(u); });
        });
    };
    for (int u = 0; u < users; ++u) ex.at(Nanos{0}, "user", [&issue, u] { issue(u); });

    ex.run_until(we);
    dispatcher.stop_ticks();
    ex.run();

    LevelResult result = rec.finish(ex.now(), mode_name(), site_name(), workload.name, users);
    const auto& c = dispatcher.counters();
    if (c.in_flight() != 0 || c.submitted != result.issued || result.completed != result.issued)
        throw InvariantError("request conservation violated: submitted " + std::to_string(c.submitted) +
                             ", finalized " + std::to_string(c.finalized()) + ", delivered " +
                             std::to_string(result.completed));
    if (on_finish) on_finish(dispatcher);
    return result;
}

LevelResult run_level(int users, const Workload& workload, Target& target, const SweepPlan& plan) {
    if (users < 0) throw std::invalid_argument("user count must be >= 0");
    return target.run_level(users, workload, plan);
}

SweepOutput run_sweep(const SweepPlan& plan, const Workload& workload, Target& target,
                      const std::optional<std::filesystem::path>& csv,
                      const std::function<void(const SummaryRow&)>& progress) {
    plan.validate();
    workload.validate();
    std::optional<CsvWriter> writer;
    if (csv) writer.emplace(*csv);
    SweepOutput out;
    for (int users : plan.levels) {
        LevelResult level;
        try {
            level = run_level(users, workload, target, plan);
        } catch (const TargetUnreachable& e) {
            level.record.mode = target.mode_name();
            level.record.site = target.site_name();
            level.record.op = workload.name;
            level.record.users = users;
            level.record.window_s = plan.measure_s;
            level.record.partial = true;
            level.error = e.what();
            out.errors.push_back("users=" + std::to_string(users) + ": " + e.what());
        }
        SummaryRow row = aggregate(level.record);
        if (writer) writer->append(row);
        if (progress) progress(row);
        out.report.rows.push_back(row);
        out.levels.push_back(std::move(level));
    }
    out.report.knee_users = knee_detect(out.report.rows);
    return out;
}

}  // namespace offload
