#pragma once

// Scenario configuration: which orchestration mode runs where, with which
// service catalog, latency model and service-time model.

#include <array>
#include <filesystem>
#include <optional>
#include <string>

#include "offload/codec.hpp"
#include "offload/config_store.hpp"
#include "offload/estimator.hpp"
#include "offload/orchestration.hpp"
#include "offload/random.hpp"

namespace offload {

enum class Mode { Monolithic, SwarmStyle, KubeStyle };
enum class Site { Edge, Cloud };

std::string_view to_string(Mode m);
std::string_view to_string(Site s);
Mode parse_mode(std::string_view s);
Site parse_site(std::string_view s);

struct LinkModel {
    Distribution one_way_delay = Distribution::constant(1.0);
    // Serialization delay bytes / bandwidth on the response path when set.
    std::optional<double> bandwidth_Bps;
};

struct Scenario {
    std::string name;
    Mode mode = Mode::SwarmStyle;
    Site site = Site::Edge;
    Ssi ssi;
    LinkModel link;
    std::array<Distribution, kServiceKindCount> service_times{};
    // Data Manager pre-processing delay per request.
    double overhead_ms = 0.5;
    LinkBudgetParams estimator;
    BucketGrid grid;
    std::string config_log;
    std::string results_log;
    RetryPolicy read_retry;
    int traffic_engineer_reads = 3;
    AutoscalerPolicy autoscaler;
    std::optional<std::uint64_t> seed;

    const Distribution& service_time(ServiceKind k) const { return service_times[kind_index(k)]; }
};

double default_overhead_ms(Mode m);
LinkModel default_link(Site s);
Ssi default_ssi(Mode m);
Scenario default_scenario(Mode m, Site s);

// Relative paths (SSI, estimator params, logs) resolve against base_dir.
Scenario scenario_from_json(const Json& j, const std::filesystem::path& base_dir,
                            const std::string& origin);
// Throws ConfigError naming the path if it does not exist.
Scenario load_scenario(const std::filesystem::path& path);
Json scenario_to_json(const Scenario& s);

}  // namespace offload
