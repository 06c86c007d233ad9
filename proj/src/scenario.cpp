#include "offload/scenario.hpp"

#include <stdexcept>

namespace offload {

std::string_view to_string(Mode m) {
    switch (m) {
        case Mode::Monolithic: return "monolithic";
        case Mode::SwarmStyle: return "swarm";
        case Mode::KubeStyle: return "kube";
    }
    return "?";
}

std::string_view to_string(Site s) { return s == Site::Edge ? "edge" : "cloud"; }

Mode parse_mode(std::string_view s) {
    if (s == "monolithic" || s == "mono") return Mode::Monolithic;
    if (s == "swarm") return Mode::SwarmStyle;
    if (s == "kube") return Mode::KubeStyle;
    throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

Site parse_site(std::string_view s) {
    if (s == "edge") return Site::Edge;
    if (s == "cloud") return Site::Cloud;
    throw std::invalid_argument("unknown site '" + std::string(s) + "'");
}

double default_overhead_ms(Mode m) {
    switch (m) {
        case Mode::Monolithic: return 0.2;
        case Mode::SwarmStyle: return 0.5;
        case Mode::KubeStyle: return 0.8;
    }
    return 0.5;
}

LinkModel default_link(Site s) {
    LinkModel l;
    l.one_way_delay = Distribution::constant(s == Site::Edge ? 1.0 : 20.0);
    return l;
}

Ssi default_ssi(Mode m) {
    Ssi ssi;
    ssi.node_template = NodeCapacity{"node", 4000, 8192, {}};
    ssi.node_concurrency = 4;
    auto add = [&](ServiceKind k, std::int64_t cpu, std::int64_t mem, int replicas) {
        ssi.services.push_back({k, cpu, mem, replicas, static_cast<int>(std::max<std::int64_t>(1, cpu / 1000))});
        ssi.dynamic[k] = {replicas, true};
    };
    if (m == Mode::Monolithic) {
        ssi.node_template.node_id = "mono";
        add(ServiceKind::Read, 1000, 1024, 1);
        add(ServiceKind::Write, 1000, 1024, 1);
        add(ServiceKind::Estimate, 1000, 2048, 1);
        add(ServiceKind::Admin, 500, 512, 1);
    } else {
        ssi.node_template.node_id = "worker";
        bool kube = m == Mode::KubeStyle;
        add(ServiceKind::Read, 1000, 1024, kube ? 1 : 2);
        add(ServiceKind::Write, 1000, 1024, 1);
        add(ServiceKind::Estimate, 2000, 2048, 1);
        add(ServiceKind::Admin, 500, 512, 1);
        if (kube) {
            ssi.limits.max_replicas_per_kind = {{ServiceKind::Read, 4}, {ServiceKind::Write, 2},
                                                {ServiceKind::Estimate, 2}};
            ssi.limits.min_replicas_per_kind = {{ServiceKind::Read, 1}, {ServiceKind::Write, 1},
                                                {ServiceKind::Estimate, 1}};
        }
    }
    validate_ssi(ssi);
    return ssi;
}

Scenario default_scenario(Mode m, Site s) {
    Scenario sc;
    sc.name = std::string(to_string(s)) + "-" + std::string(to_string(m));
    sc.mode = m;
    sc.site = s;
    sc.ssi = default_ssi(m);
    sc.link = default_link(s);
    sc.service_times[kind_index(ServiceKind::Read)] = Distribution::exponential(2.0);
    sc.service_times[kind_index(ServiceKind::Write)] = Distribution::exponential(6.0);
    sc.service_times[kind_index(ServiceKind::Estimate)] = Distribution::exponential(20.0);
    sc.service_times[kind_index(ServiceKind::Admin)] = Distribution::exponential(1.0);
    sc.service_times[kind_index(ServiceKind::TesterStub)] = Distribution::constant(0.0);
    sc.overhead_ms = default_overhead_ms(m);
    return sc;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::filesystem::path existing(const std::filesystem::path& base, const std::string& p,
                               const std::string& field) {
    auto path = resolve(base, p);
    if (!std::filesystem::exists(path))
        throw ConfigError(field + " references missing file " + path.string());
    return path;
}

}  // namespace

Scenario scenario_from_json(const Json& j, const std::filesystem::path& base_dir,
                            const std::string& origin) {
    try {
        if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
        Mode mode = parse_mode(j.at("mode").get<std::string>());
        Site site = parse_site(j.value("site", std::string("edge")));
        Scenario sc = default_scenario(mode, site);
        sc.name = j.value("name", sc.name);

        if (auto it = j.find("ssi"); it != j.end()) {
            if (it->is_string())
                sc.ssi = load_ssi(existing(base_dir, it->get<std::string>(), "ssi").string());
            else
                sc.ssi = ssi_from_json(*it, origin + ":ssi");
        }
        if (auto it = j.find("link"); it != j.end()) {
            if (it->contains("one_way_delay_ms")) it->at("one_way_delay_ms").get_to(sc.link.one_way_delay);
            if (auto bw = it->find("bandwidth_Bps"); bw != it->end() && !bw->is_null()) {
                sc.link.bandwidth_Bps = bw->get<double>();
                if (!(*sc.link.bandwidth_Bps > 0)) throw ConfigError("bandwidth_Bps must be > 0");
            }
        }
        if (auto it = j.find("service_times"); it != j.end())
            for (const auto& [name, d] : it->items())
                d.get_to(sc.service_times[kind_index(parse_service_kind(name))]);
        sc.overhead_ms = j.value("overhead_ms", sc.overhead_ms);
        if (!(sc.overhead_ms >= 0)) throw ConfigError("overhead_ms must be >= 0");
        if (auto it = j.find("estimator"); it != j.end()) {
            if (it->is_string())
                sc.estimator = load_link_budget(existing(base_dir, it->get<std::string>(), "estimator").string());
            else
                it->get_to(sc.estimator);
            validate_params(sc.estimator);
        }
        if (auto it = j.find("grid"); it != j.end()) it->get_to(sc.grid);
        if (auto it = j.find("store"); it != j.end()) {
            auto log = it->value("config_log", std::string());
            auto res = it->value("results_log", std::string());
            sc.config_log = log.empty() ? log : resolve(base_dir, log).string();
            sc.results_log = res.empty() ? res : resolve(base_dir, res).string();
        }
        if (auto it = j.find("retry"); it != j.end()) {
            sc.read_retry.interval = from_ms(it->value("interval_ms", 100.0));
            sc.read_retry.max_retries = it->value("max_retries", 3);
            if (sc.read_retry.interval.count() <= 0 || sc.read_retry.max_retries < 0)
                throw ConfigError("retry interval must be > 0 and max_retries >= 0");
        }
        sc.traffic_engineer_reads = j.value("traffic_engineer_reads", sc.traffic_engineer_reads);
        if (auto it = j.find("autoscaler"); it != j.end()) {
            auto& a = sc.autoscaler;
            a.up_threshold = it->value("up_threshold", a.up_threshold);
            a.sustain_window = it->value("sustain_window", a.sustain_window);
            a.idle_window = it->value("idle_window", a.idle_window);
            a.tick = from_ms(it->value("tick_ms", to_ms(a.tick)));
            if (a.tick.count() <= 0 || a.sustain_window < 1 || a.idle_window < 1)
                throw ConfigError("autoscaler windows and tick must be positive");
        }
        if (auto it = j.find("seed"); it != j.end() && !it->is_null()) sc.seed = it->get<std::uint64_t>();
        return sc;
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

Scenario load_scenario(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("scenario file not found: " + path.string());
    Json j = load_json_file(path.string());
    return scenario_from_json(j, path.parent_path(), path.string());
}

Json scenario_to_json(const Scenario& s) {
    Json times = Json::object();
    for (ServiceKind k : kAllServiceKinds) times[std::string(to_string(k))] = s.service_time(k);
    Json j{{"name", s.name},
           {"mode", to_string(s.mode)},
           {"site", to_string(s.site)},
           {"ssi", ssi_to_json(s.ssi)},
           {"link", Json{{"one_way_delay_ms", s.link.one_way_delay},
                         {"bandwidth_Bps", s.link.bandwidth_Bps ? Json(*s.link.bandwidth_Bps) : Json(nullptr)}}},
           {"service_times", times},
           {"overhead_ms", s.overhead_ms},
           {"estimator", s.estimator},
           {"grid", s.grid},
           {"store", Json{{"config_log", s.config_log}, {"results_log", s.results_log}}},
           {"retry", Json{{"interval_ms", to_ms(s.read_retry.interval)}, {"max_retries", s.read_retry.max_retries}}},
           {"traffic_engineer_reads", s.traffic_engineer_reads},
           {"autoscaler", Json{{"up_threshold", s.autoscaler.up_threshold},
                               {"sustain_window", s.autoscaler.sustain_window},
                               {"idle_window", s.autoscaler.idle_window},
                               {"tick_ms", to_ms(s.autoscaler.tick)}}},
           {"seed", s.seed ? Json(*s.seed) : Json(nullptr)}};
    return j;
}

}  // namespace offload
