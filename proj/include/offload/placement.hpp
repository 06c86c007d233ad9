#pragma once

// Two-dimensional (cpu, mem) bin packing of service instances onto
// homogeneous nodes.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace offload {

enum class ServiceKind { Read, Write, Estimate, Admin, TesterStub };

std::string_view to_string(ServiceKind k);
ServiceKind parse_service_kind(std::string_view s);

inline constexpr ServiceKind kAllServiceKinds[] = {ServiceKind::Read, ServiceKind::Write,
                                                   ServiceKind::Estimate, ServiceKind::Admin,
                                                   ServiceKind::TesterStub};

struct ServiceInstanceSpec {
    ServiceKind service_kind = ServiceKind::Read;
    std::int64_t cpu_millicores = 1000;
    std::int64_t mem_mb = 512;
    // Caller-chosen identity carried through placement; not used for ordering.
    std::string instance_id;

    bool operator==(const ServiceInstanceSpec&) const = default;
};

struct NodeCapacity {
    std::string node_id;
    std::int64_t cpu_millicores_total = 4000;
    std::int64_t mem_mb_total = 8192;
    std::vector<ServiceInstanceSpec> assigned;

    std::int64_t cpu_used() const;
    std::int64_t mem_used() const;
    bool fits(const ServiceInstanceSpec& s) const;
    bool feasible() const { return cpu_used() <= cpu_millicores_total && mem_used() <= mem_mb_total; }

    bool operator==(const NodeCapacity&) const = default;
};

using Placement = std::vector<NodeCapacity>;

// First-fit decreasing on the dominant normalized dimension
// max(cpu/cpu_total, mem/mem_total). Ties order by cpu desc, mem desc,
// service kind, then input position. New nodes are named
// "<template id>-<n>". Throws UnplaceableInstance if an instance cannot fit an
// empty node.
Placement place_ffd(std::span<const ServiceInstanceSpec> instances, const NodeCapacity& node_template);

// Exhaustive minimum-node placement (branch and bound over set partitions).
// Limited to 10 instances.
Placement place_optimal_bruteforce(std::span<const ServiceInstanceSpec> instances,
                                   const NodeCapacity& node_template);

// Places one more instance into the first node with room, opening a new node
// from the template if none has room. Returns the index of the hosting node.
std::size_t place_incremental(Placement& nodes, const ServiceInstanceSpec& instance,
                              const NodeCapacity& node_template);

}  // namespace offload
