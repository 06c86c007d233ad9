#include "offload/orchestration.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace offload {

const ServiceEntry* Ssi::find(ServiceKind kind) const {
    for (const auto& s : services)
        if (s.service_kind == kind) return &s;
    return nullptr;
}

int Ssi::max_replicas(ServiceKind kind) const {
    if (auto it = limits.max_replicas_per_kind.find(kind); it != limits.max_replicas_per_kind.end())
        return it->second;
    const auto* e = find(kind);
    return e ? std::max(e->initial_replicas, 1) : 0;
}

int Ssi::min_replicas(ServiceKind kind) const {
    if (auto it = limits.min_replicas_per_kind.find(kind); it != limits.min_replicas_per_kind.end())
        return it->second;
    const auto* e = find(kind);
    return e ? std::min(e->initial_replicas, 1) : 0;
}

namespace {

// Wraps json accessors so schema errors name the field path.
struct FieldReader {
    const std::string& origin;

    template <typename T>
    T get(const Json& obj, const std::string& key, const std::string& path) const {
        auto it = obj.find(key);
        if (it == obj.end()) throw ParseError(origin, 0, "missing field " + path + key);
        try {
            return it->template get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ParseError(origin, 0, "wrong type for field " + path + key);
        }
    }

    template <typename T>
    T get_or(const Json& obj, const std::string& key, const std::string& path, T fallback) const {
        if (!obj.contains(key)) return fallback;
        return get<T>(obj, key, path);
    }

    ServiceKind kind(const std::string& name, const std::string& path) const {
        try {
            return parse_service_kind(name);
        } catch (const std::invalid_argument& e) {
            throw ParseError(origin, 0, path + ": " + e.what());
        }
    }
};

std::map<ServiceKind, int> read_kind_map(const FieldReader& r, const Json& obj, const std::string& path) {
    std::map<ServiceKind, int> out;
    if (!obj.is_object()) throw ParseError(r.origin, 0, path + " must be an object");
    for (const auto& [name, v] : obj.items()) {
        if (!v.is_number_integer())
            throw ParseError(r.origin, 0, "wrong type for field " + path + "." + name);
        out[r.kind(name, path + "." + name)] = v.get<int>();
    }
    return out;
}

}  // namespace

Ssi ssi_from_json(const Json& j, const std::string& origin) {
    FieldReader r{origin};
    if (!j.is_object()) throw ParseError(origin, 0, "SSI document must be an object");
    Ssi ssi;

    const Json& statics = j.contains("static") ? j.at("static") : Json();
    if (!statics.is_array()) throw ParseError(origin, 0, "missing field static (array)");
    for (std::size_t i = 0; i < statics.size(); ++i) {
        const auto& e = statics[i];
        std::string path = "static[" + std::to_string(i) + "].";
        ServiceEntry s;
        s.service_kind = r.kind(r.get<std::string>(e, "service_kind", path), path + "service_kind");
        s.min_cpu_millicores = r.get<std::int64_t>(e, "min_cpu_millicores", path);
        s.min_mem_mb = r.get<std::int64_t>(e, "min_mem_mb", path);
        s.initial_replicas = r.get<int>(e, "initial_replicas", path);
        int derived = static_cast<int>(std::max<std::int64_t>(1, s.min_cpu_millicores / 1000));
        s.concurrency = r.get_or<int>(e, "concurrency", path, derived);
        ssi.services.push_back(s);
    }

    if (j.contains("node_template")) {
        const auto& nt = j.at("node_template");
        std::string path = "node_template.";
        ssi.node_template.node_id = r.get_or<std::string>(nt, "node_id", path, "node");
        ssi.node_template.cpu_millicores_total = r.get<std::int64_t>(nt, "cpu_millicores_total", path);
        ssi.node_template.mem_mb_total = r.get<std::int64_t>(nt, "mem_mb_total", path);
        int derived = static_cast<int>(std::max<std::int64_t>(1, ssi.node_template.cpu_millicores_total / 1000));
        ssi.node_concurrency = r.get_or<int>(nt, "concurrency", path, derived);
    } else {
        ssi.node_template.node_id = "node";
        ssi.node_concurrency = static_cast<int>(ssi.node_template.cpu_millicores_total / 1000);
    }

    if (j.contains("limits")) {
        const auto& l = j.at("limits");
        ssi.limits.register_capacity =
            r.get_or<std::size_t>(l, "register_capacity", "limits.", ssi.limits.register_capacity);
        if (l.contains("max_replicas_per_kind"))
            ssi.limits.max_replicas_per_kind =
                read_kind_map(r, l.at("max_replicas_per_kind"), "limits.max_replicas_per_kind");
        if (l.contains("min_replicas_per_kind"))
            ssi.limits.min_replicas_per_kind =
                read_kind_map(r, l.at("min_replicas_per_kind"), "limits.min_replicas_per_kind");
    }

    // Dynamic section defaults to the initial state of the static section.
    for (const auto& s : ssi.services) ssi.dynamic[s.service_kind] = {s.initial_replicas, true};
    if (j.contains("dynamic")) {
        const auto& d = j.at("dynamic");
        if (!d.is_object()) throw ParseError(origin, 0, "dynamic must be an object");
        for (const auto& [name, v] : d.items()) {
            std::string path = "dynamic." + name + ".";
            ServiceKind k = r.kind(name, "dynamic." + name);
            auto& dyn = ssi.dynamic[k];
            const auto* entry = ssi.find(k);
            if (!entry) throw InvariantError("dynamic." + name + " references a service missing from static");
            dyn.current_replicas = r.get_or<int>(v, "current_replicas", path, entry->initial_replicas);
            dyn.available = r.get_or<bool>(v, "available", path, true);
        }
    }
    validate_ssi(ssi);
    return ssi;
}

Ssi parse_ssi(std::string_view text, const std::string& origin) {
    return ssi_from_json(parse_json(text, origin), origin);
}

Ssi load_ssi(const std::string& path) { return ssi_from_json(load_json_file(path), path); }

void validate_ssi(const Ssi& ssi) {
    std::set<ServiceKind> seen;
    for (const auto& s : ssi.services) {
        std::string name(to_string(s.service_kind));
        if (!seen.insert(s.service_kind).second)
            throw InvariantError("service kind " + name + " listed more than once in static");
        if (s.min_cpu_millicores <= 0 || s.min_mem_mb <= 0)
            throw InvariantError(name + ": resource minima must be positive");
        if (s.initial_replicas < 0) throw InvariantError(name + ": initial_replicas must be >= 0");
        if (s.concurrency < 1) throw InvariantError(name + ": concurrency must be >= 1");
        int lo = ssi.min_replicas(s.service_kind), hi = ssi.max_replicas(s.service_kind);
        if (lo < 0 || lo > hi) throw InvariantError(name + ": min_replicas must lie in [0, max_replicas]");
        auto it = ssi.dynamic.find(s.service_kind);
        int cur = it == ssi.dynamic.end() ? s.initial_replicas : it->second.current_replicas;
        if (cur < lo || cur > hi)
            throw InvariantError(name + ": current_replicas " + std::to_string(cur) + " outside [" +
                                 std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    for (const auto& [k, d] : ssi.dynamic)
        if (!seen.count(k))
            throw InvariantError("dynamic entry " + std::string(to_string(k)) + " has no static entry");
    for (const auto& [k, v] : ssi.limits.max_replicas_per_kind)
        if (!seen.count(k))
            throw InvariantError("max_replicas_per_kind." + std::string(to_string(k)) + " has no static entry");
    if (ssi.node_template.cpu_millicores_total <= 0 || ssi.node_template.mem_mb_total <= 0)
        throw InvariantError("node_template capacity must be positive");
    if (ssi.node_concurrency < 1) throw InvariantError("node_template.concurrency must be >= 1");
    if (ssi.limits.register_capacity == 0) throw InvariantError("register_capacity must be >= 1");
}

Json ssi_to_json(const Ssi& ssi) {
    Json statics = Json::array();
    for (const auto& s : ssi.services)
        statics.push_back(Json{{"service_kind", to_string(s.service_kind)},
                               {"min_cpu_millicores", s.min_cpu_millicores},
                               {"min_mem_mb", s.min_mem_mb},
                               {"initial_replicas", s.initial_replicas},
                               {"concurrency", s.concurrency}});
    Json dynamic = Json::object();
    for (const auto& [k, d] : ssi.dynamic)
        dynamic[std::string(to_string(k))] = Json{{"current_replicas", d.current_replicas},
                                                  {"available", d.available}};
    auto kind_map = [](const std::map<ServiceKind, int>& m) {
        Json o = Json::object();
        for (const auto& [k, v] : m) o[std::string(to_string(k))] = v;
        return o;
    };
    return Json{{"static", statics},
                {"dynamic", dynamic},
                {"node_template",
                 Json{{"node_id", ssi.node_template.node_id},
                      {"cpu_millicores_total", ssi.node_template.cpu_millicores_total},
                      {"mem_mb_total", ssi.node_template.mem_mb_total},
                      {"concurrency", ssi.node_concurrency}}},
                {"limits", Json{{"register_capacity", ssi.limits.register_capacity},
                                {"max_replicas_per_kind", kind_map(ssi.limits.max_replicas_per_kind)},
                                {"min_replicas_per_kind", kind_map(ssi.limits.min_replicas_per_kind)}}}};
}

std::string_view to_string(Health h) {
    switch (h) {
        case Health::Ready: return "Ready";
        case Health::Busy: return "Busy";
        case Health::Down: return "Down";
    }
    return "?";
}

void ServiceDirectory::add(ServiceKind kind, DirectoryEntry entry) {
    if (find(entry.instance_id)) throw std::invalid_argument("duplicate instance " + entry.instance_id);
    entries_[kind_index(kind)].push_back(std::move(entry));
}

void ServiceDirectory::remove(const std::string& instance_id) {
    for (auto& v : entries_) {
        auto it = std::find_if(v.begin(), v.end(),
                               [&](const DirectoryEntry& e) { return e.instance_id == instance_id; });
        if (it != v.end()) {
            v.erase(it);
            return;
        }
    }
    throw UnknownTarget("unknown instance " + instance_id);
}

DirectoryEntry* ServiceDirectory::find_mut(const std::string& instance_id) {
    for (auto& v : entries_)
        for (auto& e : v)
            if (e.instance_id == instance_id) return &e;
    return nullptr;
}

const DirectoryEntry* ServiceDirectory::find(const std::string& instance_id) const {
    return const_cast<ServiceDirectory*>(this)->find_mut(instance_id);
}

void ServiceDirectory::set_health(const std::string& instance_id, Health health) {
    auto* e = find_mut(instance_id);
    if (!e) throw UnknownTarget("unknown instance " + instance_id);
    if (e->health == Health::Down && health != Health::Down)
        throw std::logic_error("instance " + instance_id + " is Down and cannot recover");
    e->health = health;
}

void ServiceDirectory::set_load(const std::string& instance_id, std::size_t in_service,
                                std::size_t queue_len) {
    auto* e = find_mut(instance_id);
    if (!e) throw UnknownTarget("unknown instance " + instance_id);
    e->in_service = in_service;
    e->queue_len = queue_len;
}

const std::vector<DirectoryEntry>& ServiceDirectory::instances(ServiceKind kind) const {
    return entries_[kind_index(kind)];
}

std::size_t ServiceDirectory::live_count(ServiceKind kind) const {
    const auto& v = entries_[kind_index(kind)];
    return static_cast<std::size_t>(
        std::count_if(v.begin(), v.end(), [](const DirectoryEntry& e) { return e.health != Health::Down; }));
}

bool ServiceDirectory::all_idle(ServiceKind kind) const {
    for (const auto& e : entries_[kind_index(kind)])
        if (e.health != Health::Down && (e.in_service > 0 || e.queue_len > 0)) return false;
    return true;
}

std::string_view to_string(StepKind k) {
    switch (k) {
        case StepKind::Read: return "Read";
        case StepKind::Write: return "Write";
        case StepKind::Estimate: return "Estimate";
        case StepKind::Respond: return "Respond";
    }
    return "?";
}

ServiceKind service_for(StepKind k) {
    switch (k) {
        case StepKind::Read: return ServiceKind::Read;
        case StepKind::Write: return ServiceKind::Write;
        case StepKind::Estimate: return ServiceKind::Estimate;
        case StepKind::Respond: break;
    }
    throw std::invalid_argument("respond step has no service");
}

std::vector<StepKind> WorkflowPlan::kinds() const {
    std::vector<StepKind> out;
    for (const auto& s : steps) out.push_back(s.kind);
    return out;
}

WorkflowPlan plan_workflow(RequestKind kind, const PlanOptions& options) {
    WorkflowPlan p;
    auto add = [&](StepKind k, bool miss_only = false, std::optional<RetryPolicy> retry = std::nullopt) {
        p.steps.push_back({k, miss_only, retry});
    };
    switch (kind) {
        case RequestKind::UserAssign:
        case RequestKind::ResourceUpdate:
            add(StepKind::Read);
            add(StepKind::Write);
            break;
        case RequestKind::ResourceQuery:
            add(StepKind::Read, false, options.read_retry);
            break;
        case RequestKind::TrafficEngineer:
            for (int i = 0; i < std::max(1, options.traffic_engineer_reads); ++i) add(StepKind::Read);
            break;
        case RequestKind::ChannelEstimate:
            add(StepKind::Read);
            add(StepKind::Estimate, true);
            add(StepKind::Write, true);
            break;
    }
    add(StepKind::Respond);
    return p;
}

std::vector<ScalingAction> Autoscaler::tick(const ServiceDirectory& directory,
                                            const std::function<std::size_t(ServiceKind)>& backlog,
                                            Ssi& ssi) {
    std::vector<ScalingAction> actions;
    for (const auto& entry : ssi.services) {
        ServiceKind k = entry.service_kind;
        auto i = kind_index(k);
        auto& dyn = ssi.dynamic[k];
        std::size_t queued = backlog(k);

        over_ticks_[i] = queued > policy_.up_threshold ? over_ticks_[i] + 1 : 0;
        idle_ticks_[i] = (queued == 0 && directory.all_idle(k)) ? idle_ticks_[i] + 1 : 0;

        if (over_ticks_[i] >= policy_.sustain_window) {
            over_ticks_[i] = 0;
            if (dyn.current_replicas < ssi.max_replicas(k)) {
                ++dyn.current_replicas;
                actions.push_back({k, +1, dyn.current_replicas});
            }
        } else if (idle_ticks_[i] >= policy_.idle_window) {
            idle_ticks_[i] = 0;
            if (dyn.current_replicas > ssi.min_replicas(k)) {
                --dyn.current_replicas;
                actions.push_back({k, -1, dyn.current_replicas});
            }
        }
    }
    return actions;
}

std::optional<ResponseEnvelope> enforce_deadline(const RequestEnvelope& req, Nanos now) {
    if (now - req.arrival_ts <= from_ms(req.deadline_ms)) return std::nullopt;
    ResponseEnvelope r;
    r.id = req.id;
    r.status = Status::Timeout;
    r.completion_ts = now;
    return r;
}

}  // namespace offload
