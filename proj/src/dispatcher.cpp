#include "offload/dispatcher.hpp"

#include <algorithm>
#include <deque>

namespace offload {

struct Dispatcher::Runtime {
    std::string instance_id;
    std::string node_id;
    ServiceKind kind = ServiceKind::Read;
    int concurrency = 1;
    bool down = false;
    bool removed = false;
    // Bumped on failure so completions scheduled before it are ignored.
    std::uint64_t epoch = 0;
    int max_in_service = 0;
    Rng rng;
    std::vector<Ticket> active;
    // Monolithic pool only; microservice modes queue in the Register.
    std::deque<Ticket> queue;

    int in_service() const { return static_cast<int>(active.size()); }
    bool accepting() const { return !down && !removed && in_service() < concurrency; }
};

struct Dispatcher::JobState {
    std::uint32_t generation = 0;
    bool active = false;
    Job job;
    Completion done;
    ConfigKey key;
    const WorkflowPlan* plan = nullptr;
    std::size_t step = 0;
    int retries = 0;
    bool missed = false;
    // Set while waiting in the Register (micro) or the pool queue (mono).
    bool queued = false;
    ServiceKind queued_kind = ServiceKind::Read;
    // Mono only: a handler thread keeps its slot for the whole workflow.
    bool holding = false;
    std::optional<StoreRecord> read_record;
    std::optional<ChannelConfig> estimated;
    std::optional<StoreRecord> written;
    Nanos submitted_at{0};
};

Dispatcher::Dispatcher(const Scenario& scenario, Executor& executor, ConfigStore& store,
                       ConfigStore* results, std::uint64_t seed)
    : scenario_(scenario),
      exec_(executor),
      store_(store),
      results_(results),
      seed_(seed),
      ssi_(scenario.ssi),
      register_(scenario.ssi.limits.register_capacity) {
    validate_ssi(ssi_);
    plan_options_.traffic_engineer_reads = scenario.traffic_engineer_reads;
    plan_options_.read_retry = scenario.read_retry;
    for (RequestKind k : {RequestKind::UserAssign, RequestKind::ResourceQuery, RequestKind::ResourceUpdate,
                          RequestKind::TrafficEngineer, RequestKind::ChannelEstimate})
        plans_[static_cast<std::size_t>(k)] = plan_workflow(k, plan_options_);
}

Dispatcher::~Dispatcher() = default;

Nanos Dispatcher::sample(const Distribution& d, Rng& rng) const {
    return from_ms(std::max(0.0, d.sample_ms(rng)));
}

Rng& Dispatcher::link_rng(std::uint64_t user) {
    auto it = link_rngs_.find(user);
    if (it == link_rngs_.end()) it = link_rngs_.emplace(user, Rng(derive_seed(seed_, "link", user))).first;
    return it->second;
}

Dispatcher::Runtime& Dispatcher::add_runtime(ServiceKind kind, const std::string& node_id) {
    const ServiceEntry* entry = ssi_.find(kind);
    auto rt = std::make_unique<Runtime>();
    rt->kind = kind;
    rt->instance_id = std::string(to_string(kind)) + "-" + std::to_string(++next_index_[kind_index(kind)]);
    rt->node_id = node_id;
    rt->concurrency = entry ? entry->concurrency : 1;
    rt->rng = Rng(derive_seed(seed_, rt->instance_id));
    directory_.add(kind, DirectoryEntry{rt->instance_id, node_id, Health::Ready, 0, 0});
    runtimes_.push_back(std::move(rt));
    return *runtimes_.back();
}

void Dispatcher::start() {
    if (started_) throw std::logic_error("dispatcher already started");
    started_ = true;
    if (scenario_.mode == Mode::Monolithic) {
        NodeCapacity node = ssi_.node_template;
        node.node_id = ssi_.node_template.node_id + "-1";
        node.assigned.clear();
        for (const auto& s : ssi_.services) {
            int n = ssi_.dynamic.count(s.service_kind) ? ssi_.dynamic.at(s.service_kind).current_replicas
                                                        : s.initial_replicas;
            for (int i = 0; i < n; ++i)
                node.assigned.push_back({s.service_kind, s.min_cpu_millicores, s.min_mem_mb,
                                         "monolith/" + std::string(to_string(s.service_kind))});
        }
        if (!node.feasible())
            throw ConfigError("monolithic services need " + std::to_string(node.cpu_used()) + " mc / " +
                              std::to_string(node.mem_used()) + " MB but the node offers " +
                              std::to_string(node.cpu_millicores_total) + " mc / " +
                              std::to_string(node.mem_mb_total) + " MB");
        nodes_.push_back(node);
        mono_ = std::make_unique<Runtime>();
        mono_->instance_id = "monolith";
        mono_->node_id = node.node_id;
        mono_->kind = ServiceKind::Admin;
        mono_->concurrency = std::max(1, ssi_.node_concurrency);
        mono_->rng = Rng(derive_seed(seed_, "monolith"));
        for (const auto& s : ssi_.services)
            directory_.add(s.service_kind, DirectoryEntry{"monolith/" + std::string(to_string(s.service_kind)),
                                                          node.node_id, Health::Ready, 0, 0});
        return;
    }

    std::vector<ServiceInstanceSpec> specs;
    for (const auto& s : ssi_.services) {
        int n = ssi_.dynamic.count(s.service_kind) ? ssi_.dynamic.at(s.service_kind).current_replicas
                                                    : s.initial_replicas;
        for (int i = 0; i < n; ++i)
            specs.push_back({s.service_kind, s.min_cpu_millicores, s.min_mem_mb,
                             std::to_string(specs.size())});
    }
    Placement placed = place_ffd(specs, ssi_.node_template);
    for (auto& node : placed) {
        for (auto& spec : node.assigned) {
            Runtime& rt = add_runtime(spec.service_kind, node.node_id);
            spec.instance_id = rt.instance_id;
        }
    }
    nodes_ = std::move(placed);

    if (scenario_.mode == Mode::KubeStyle) {
        autoscaler_.emplace(scenario_.autoscaler);
        ticking_ = true;
        exec_.after(scenario_.autoscaler.tick, "autoscale", [this] { tick(); });
    }
}

void Dispatcher::stop_ticks() { ticking_ = false; }

std::vector<RuntimeView> Dispatcher::runtimes() const {
    std::vector<RuntimeView> out;
    auto view = [](const Runtime& r) {
        return RuntimeView{r.instance_id, r.node_id,     r.kind, r.concurrency, r.in_service(),
                           r.max_in_service, r.down, r.removed};
    };
    if (mono_) out.push_back(view(*mono_));
    for (const auto& r : runtimes_) out.push_back(view(*r));
    return out;
}

Dispatcher::Ticket Dispatcher::allocate() {
    std::uint32_t slot;
    if (!free_slots_.empty()) {
        slot = free_slots_.back();
        free_slots_.pop_back();
    } else {
        slot = static_cast<std::uint32_t>(jobs_.size());
        jobs_.push_back(std::make_unique<JobState>());
    }
    JobState& j = *jobs_[slot];
    std::uint32_t gen = j.generation;
    j = JobState{};
    j.generation = gen;
    j.active = true;
    return Ticket{slot, gen};
}

void Dispatcher::release(Ticket t) {
    JobState& j = *jobs_[t.slot];
    j.active = false;
    ++j.generation;
    j.done = nullptr;
    free_slots_.push_back(t.slot);
}

Dispatcher::JobState* Dispatcher::live(Ticket t) {
    if (t.slot >= jobs_.size()) return nullptr;
    JobState* j = jobs_[t.slot].get();
    return j->active && j->generation == t.generation ? j : nullptr;
}

void Dispatcher::submit(Job job, Completion done) {
    if (!started_) throw std::logic_error("dispatcher not started");
    ++counters_.submitted;
    Ticket t = allocate();
    JobState& j = *jobs_[t.slot];
    j.submitted_at = exec_.now();
    j.key = job.key ? *job.key : make_config_key(job.request.qos, job.request.state, scenario_.grid);
    j.plan = &plans_[static_cast<std::size_t>(job.request.kind)];
    j.done = std::move(done);
    Nanos delay = sample(scenario_.link.one_way_delay, link_rng(job.user));
    j.job = std::move(job);
    exec_.after(delay, "arrive", [this, t] { arrive(t); });
}

void Dispatcher::arrive(Ticket t) {
    JobState* j = live(t);
    if (!j) return;
    j->job.request.arrival_ts = exec_.now();
    exec_.at(exec_.now() + from_ms(j->job.request.deadline_ms) + Nanos(1), "deadline",
             [this, t] { on_deadline(t); });
    exec_.after(from_ms(scenario_.overhead_ms), "dispatch", [this, t] { run_step(t); });
}

void Dispatcher::on_deadline(Ticket t) {
    JobState* j = live(t);
    if (!j) return;
    if (enforce_deadline(j->job.request, exec_.now())) finalize(t, Status::Timeout);
}

void Dispatcher::run_step(Ticket t) {
    JobState* j = live(t);
    if (!j) return;
    const auto& steps = j->plan->steps;
    while (j->step < steps.size() && steps[j->step].on_miss_only && !j->missed) ++j->step;
    if (j->step >= steps.size() || steps[j->step].kind == StepKind::Respond) {
        finalize(t, Status::Ok);
        return;
    }
    acquire(t, service_for(steps[j->step].kind));
}

bool Dispatcher::has_live(ServiceKind kind) const {
    for (const auto& r : runtimes_)
        if (r->kind == kind && !r->down && !r->removed) return true;
    return false;
}

Dispatcher::Runtime* Dispatcher::pick_ready(ServiceKind kind) {
    Runtime* best = nullptr;
    for (const auto& r : runtimes_) {
        if (r->kind != kind || !r->accepting()) continue;
        if (!best || r->in_service() < best->in_service()) best = r.get();
    }
    return best;
}

void Dispatcher::acquire(Ticket t, ServiceKind kind) {
    JobState& j = *live(t);
    if (mono_) {
        if (mono_->down) return finalize(t, Status::Failed);
        if (j.holding || mono_->accepting()) return start_on(*mono_, t);
        if (mono_->queue.size() >= ssi_.limits.register_capacity) return finalize(t, Status::Rejected);
        mono_->queue.push_back(t);
        j.queued = true;
        j.queued_kind = kind;
        sync(*mono_);
        return;
    }
    if (Runtime* rt = pick_ready(kind)) return start_on(*rt, t);
    if (!has_live(kind)) {
        const auto& step = j.plan->steps[j.step];
        if (step.retry && j.retries < step.retry->max_retries) {
            ++j.retries;
            exec_.after(step.retry->interval, "retry", [this, t] { run_step(t); });
            return;
        }
        return finalize(t, Status::Failed);
    }
    try {
        register_.enqueue(kind, t);
    } catch (const RegisterFull&) {
        return finalize(t, Status::Rejected);
    }
    j.queued = true;
    j.queued_kind = kind;
}

void Dispatcher::start_on(Runtime& rt, Ticket t) {
    JobState& j = *live(t);
    j.queued = false;
    if (!j.holding) rt.active.push_back(t);
    if (&rt == mono_.get()) j.holding = true;
    rt.max_in_service = std::max(rt.max_in_service, rt.in_service());
    if (rt.in_service() > rt.concurrency)
        throw InvariantError("instance " + rt.instance_id + " exceeded its concurrency limit");
    sync(rt);
    ServiceKind kind = service_for(j.plan->steps[j.step].kind);
    Nanos s = sample(scenario_.service_time(kind), rt.rng);
    exec_.after(s, "step", [this, &rt, epoch = rt.epoch, t] { complete_step(rt, epoch, t); });
}

void Dispatcher::complete_step(Runtime& rt, std::uint64_t epoch, Ticket t) {
    if (rt.epoch != epoch) return;
    if (&rt == mono_.get()) {
        if (live(t)) apply_step(t);
        return;
    }
    auto it = std::find_if(rt.active.begin(), rt.active.end(), [&](const Ticket& a) {
        return a.slot == t.slot && a.generation == t.generation;
    });
    if (it != rt.active.end()) rt.active.erase(it);
    free_slot(rt);
    if (live(t)) apply_step(t);
}

void Dispatcher::free_slot(Runtime& rt) {
    while (rt.accepting()) {
        std::optional<Ticket> next;
        if (&rt == mono_.get()) {
            if (rt.queue.empty()) break;
            next = rt.queue.front();
            rt.queue.pop_front();
        } else {
            next = register_.dequeue(rt.kind);
            if (!next) break;
        }
        if (live(*next)) start_on(rt, *next);
    }
    sync(rt);
}

void Dispatcher::apply_step(Ticket t) {
    JobState& j = *live(t);
    const WorkflowStep& step = j.plan->steps[j.step];
    try {
        switch (step.kind) {
            case StepKind::Read: {
                auto rec = store_.read(j.key);
                if (rec) {
                    j.read_record = rec;
                    j.missed = false;
                } else if (step.retry && j.retries < step.retry->max_retries) {
                    ++j.retries;
                    exec_.after(step.retry->interval, "retry", [this, t] { run_step(t); });
                    return;
                } else {
                    j.missed = true;
                }
                break;
            }
            case StepKind::Estimate: {
                auto cfg = derive_config(j.job.request.qos, j.job.request.state, scenario_.estimator);
                if (!cfg) return finalize(t, Status::Rejected);
                j.estimated = cfg;
                break;
            }
            case StepKind::Write: {
                std::optional<ChannelConfig> cfg = j.estimated;
                if (!cfg) cfg = j.job.payload;
                if (!cfg && j.read_record) cfg = j.read_record->config;
                if (!cfg) cfg = derive_config(j.job.request.qos, j.job.request.state, scenario_.estimator);
                if (!cfg) return finalize(t, Status::Rejected);
                j.written = store_.write(j.key, *cfg, exec_.now());
                break;
            }
            case StepKind::Respond:
                break;
        }
    } catch (const StorageError&) {
        return finalize(t, Status::Failed);
    }
    ++j.step;
    run_step(t);
}

void Dispatcher::finalize(Ticket t, Status status) {
    JobState& j = *live(t);
    Outcome out;
    out.submitted_at = j.submitted_at;
    out.response.id = j.job.request.id;
    out.response.completion_ts = exec_.now();
    if (status == Status::Ok) {
        if (j.written) out.record = j.written;
        else if (j.read_record) out.record = j.read_record;
        if (j.estimated) out.response.config = j.estimated;
        else if (out.record) out.response.config = out.record->config;
        if (results_ && out.response.config) {
            try {
                results_->write(j.key, *out.response.config, exec_.now());
            } catch (const StorageError&) {
                status = Status::Failed;
                out.response.config.reset();
                out.record.reset();
            }
        }
    }
    out.response.status = status;
    switch (status) {
        case Status::Ok: ++counters_.ok; break;
        case Status::Timeout: ++counters_.timeout; break;
        case Status::Rejected: ++counters_.rejected; break;
        case Status::Failed: ++counters_.failed; break;
    }
    out.body = serialize_response(out.response);

    bool was_holding = j.holding;
    bool was_queued = j.queued;
    ServiceKind queued_kind = j.queued_kind;
    Completion done = std::move(j.done);
    std::uint64_t user = j.job.user;
    release(t);

    if (was_holding) {
        auto it = std::find_if(mono_->active.begin(), mono_->active.end(), [&](const Ticket& a) {
            return a.slot == t.slot && a.generation == t.generation;
        });
        if (it != mono_->active.end()) {
            mono_->active.erase(it);
            free_slot(*mono_);
        }
    }
    if (was_queued) {
        // Drop the stale ticket so it does not hold Register capacity.
        if (mono_) {
            std::erase_if(mono_->queue, [&](const Ticket& q) { return !live(q); });
            sync(*mono_);
        } else {
            for (const Ticket& q : register_.drain(queued_kind))
                if (live(q)) register_.enqueue(queued_kind, q);
        }
    }

    Nanos delay = sample(scenario_.link.one_way_delay, link_rng(user));
    if (scenario_.link.bandwidth_Bps)
        delay += from_ms(1000.0 * static_cast<double>(out.body.size()) / *scenario_.link.bandwidth_Bps);
    exec_.after(delay, "deliver", [this, done = std::move(done), out = std::move(out)]() mutable {
        out.delivered_at = exec_.now();
        if (done) done(std::move(out));
    });
}

void Dispatcher::sync(Runtime& rt) {
    if (rt.removed) return;
    auto apply = [&](const std::string& id) {
        if (!rt.down) {
            directory_.set_health(id, rt.in_service() < rt.concurrency ? Health::Ready : Health::Busy);
            directory_.set_load(id, static_cast<std::size_t>(rt.in_service()), rt.queue.size());
        }
    };
    if (&rt == mono_.get()) {
        for (const auto& s : ssi_.services) apply("monolith/" + std::string(to_string(s.service_kind)));
    } else {
        apply(rt.instance_id);
    }
}

void Dispatcher::fail_kind_backlog(ServiceKind kind) {
    for (const Ticket& q : register_.drain(kind)) {
        if (JobState* j = live(q)) {
            j->queued = false;
            finalize(q, Status::Failed);
        }
    }
}

void Dispatcher::fail_runtime(Runtime& rt) {
    if (rt.down || rt.removed) return;
    rt.down = true;
    ++rt.epoch;
    std::vector<Ticket> victims = std::move(rt.active);
    rt.active.clear();
    if (&rt == mono_.get()) {
        for (const auto& s : ssi_.services)
            directory_.set_health("monolith/" + std::string(to_string(s.service_kind)), Health::Down);
        for (const Ticket& q : rt.queue) victims.push_back(q);
        rt.queue.clear();
        for (const Ticket& v : victims)
            if (JobState* j = live(v)) {
                j->queued = false;
                finalize(v, Status::Failed);
            }
        return;
    }
    directory_.set_health(rt.instance_id, Health::Down);
    directory_.set_load(rt.instance_id, 0, 0);
    for (const Ticket& v : victims)
        if (live(v)) finalize(v, Status::Failed);
    if (!has_live(rt.kind)) fail_kind_backlog(rt.kind);
}

void Dispatcher::inject_failure(const std::string& target) {
    std::vector<Runtime*> hit;
    if (mono_) {
        bool match = target == mono_->instance_id || target == mono_->node_id;
        for (const auto& s : ssi_.services)
            match = match || target == "monolith/" + std::string(to_string(s.service_kind));
        if (match) hit.push_back(mono_.get());
    }
    for (const auto& r : runtimes_)
        if (!r->removed && (r->instance_id == target || r->node_id == target)) hit.push_back(r.get());
    if (hit.empty()) throw UnknownTarget("no instance or node named '" + target + "'");
    for (Runtime* r : hit) fail_runtime(*r);
}

void Dispatcher::inject_failure_at(const std::string& target, Nanos when) {
    exec_.at(when, "failure", [this, target] { inject_failure(target); });
}

void Dispatcher::add_instance(ServiceKind kind) {
    const ServiceEntry* entry = ssi_.find(kind);
    if (!entry) return;
    ServiceInstanceSpec spec{kind, entry->min_cpu_millicores, entry->min_mem_mb, ""};
    NodeCapacity tmpl = ssi_.node_template;
    std::size_t before = nodes_.size();
    std::size_t idx = place_incremental(nodes_, spec, tmpl);
    if (nodes_.size() > before) {
        // Keep node names unique after earlier nodes were released.
        std::string name;
        for (int n = 1;; ++n) {
            name = tmpl.node_id + "-" + std::to_string(n);
            bool taken = false;
            for (std::size_t i = 0; i < nodes_.size(); ++i)
                if (i != idx && nodes_[i].node_id == name) taken = true;
            if (!taken) break;
        }
        nodes_[idx].node_id = name;
    }
    Runtime& rt = add_runtime(kind, nodes_[idx].node_id);
    nodes_[idx].assigned.back().instance_id = rt.instance_id;
    free_slot(rt);
}

void Dispatcher::remove_instance(ServiceKind kind) {
    Runtime* victim = nullptr;
    for (auto it = runtimes_.rbegin(); it != runtimes_.rend(); ++it) {
        Runtime& r = **it;
        if (r.kind == kind && !r.down && !r.removed && r.in_service() == 0) {
            victim = &r;
            break;
        }
    }
    if (!victim) return;
    victim->removed = true;
    directory_.remove(victim->instance_id);
    for (auto n = nodes_.begin(); n != nodes_.end(); ++n) {
        if (n->node_id != victim->node_id) continue;
        std::erase_if(n->assigned, [&](const ServiceInstanceSpec& s) { return s.instance_id == victim->instance_id; });
        if (n->assigned.empty()) nodes_.erase(n);
        break;
    }
}

void Dispatcher::tick() {
    if (!ticking_) return;
    auto actions = autoscaler_->tick(
        directory_, [this](ServiceKind k) { return register_.size(k); }, ssi_);
    for (const auto& a : actions) {
        for (int i = 0; i < a.delta; ++i) add_instance(a.kind);
        for (int i = 0; i < -a.delta; ++i) remove_instance(a.kind);
        scaling_log_.push_back(a);
    }
    exec_.after(scenario_.autoscaler.tick, "autoscale", [this] { tick(); });
}

}  // namespace offload
