#include "offload/placement.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "offload/errors.hpp"

namespace offload {

std::string_view to_string(ServiceKind k) {
    switch (k) {
        case ServiceKind::Read: return "read";
        case ServiceKind::Write: return "write";
        case ServiceKind::Estimate: return "estimate";
        case ServiceKind::Admin: return "admin";
        case ServiceKind::TesterStub: return "tester_stub";
    }
    return "?";
}

ServiceKind parse_service_kind(std::string_view s) {
    for (ServiceKind k : kAllServiceKinds)
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown service kind '" + std::string(s) + "'");
}

std::int64_t NodeCapacity::cpu_used() const {
    std::int64_t sum = 0;
    for (const auto& a : assigned) sum += a.cpu_millicores;
    return sum;
}

std::int64_t NodeCapacity::mem_used() const {
    std::int64_t sum = 0;
    for (const auto& a : assigned) sum += a.mem_mb;
    return sum;
}

bool NodeCapacity::fits(const ServiceInstanceSpec& s) const {
    return cpu_used() + s.cpu_millicores <= cpu_millicores_total &&
           mem_used() + s.mem_mb <= mem_mb_total;
}

namespace {

void check_placeable(std::span<const ServiceInstanceSpec> instances, const NodeCapacity& tmpl) {
    if (tmpl.cpu_millicores_total <= 0 || tmpl.mem_mb_total <= 0)
        throw std::invalid_argument("node template capacity must be positive");
    for (const auto& s : instances) {
        if (s.cpu_millicores <= 0 || s.mem_mb <= 0)
            throw std::invalid_argument("instance demands must be positive");
        if (s.cpu_millicores > tmpl.cpu_millicores_total || s.mem_mb > tmpl.mem_mb_total)
            throw UnplaceableInstance(std::string(to_string(s.service_kind)) + " instance (cpu " +
                                      std::to_string(s.cpu_millicores) + ", mem " +
                                      std::to_string(s.mem_mb) + ") exceeds an empty node");
    }
}

NodeCapacity empty_node(const NodeCapacity& tmpl, std::size_t index) {
    NodeCapacity n;
    n.node_id = (tmpl.node_id.empty() ? std::string("node") : tmpl.node_id) + "-" +
                std::to_string(index);
    n.cpu_millicores_total = tmpl.cpu_millicores_total;
    n.mem_mb_total = tmpl.mem_mb_total;
    return n;
}

}  // namespace

Placement place_ffd(std::span<const ServiceInstanceSpec> instances, const NodeCapacity& tmpl) {
    check_placeable(instances, tmpl);
    std::vector<std::size_t> order(instances.size());
    std::iota(order.begin(), order.end(), 0);
    auto dominant = [&](const ServiceInstanceSpec& s) {
        return std::max(static_cast<double>(s.cpu_millicores) / tmpl.cpu_millicores_total,
                        static_cast<double>(s.mem_mb) / tmpl.mem_mb_total);
    };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = instances[a];
        const auto& y = instances[b];
        double dx = dominant(x), dy = dominant(y);
        if (dx != dy) return dx > dy;
        if (x.cpu_millicores != y.cpu_millicores) return x.cpu_millicores > y.cpu_millicores;
        if (x.mem_mb != y.mem_mb) return x.mem_mb > y.mem_mb;
        if (x.service_kind != y.service_kind) return x.service_kind < y.service_kind;
        return a < b;
    });

    Placement nodes;
    for (std::size_t i : order) place_incremental(nodes, instances[i], tmpl);
    return nodes;
}

std::size_t place_incremental(Placement& nodes, const ServiceInstanceSpec& instance,
                              const NodeCapacity& tmpl) {
    check_placeable(std::span(&instance, 1), tmpl);
    for (std::size_t n = 0; n < nodes.size(); ++n) {
        if (nodes[n].fits(instance)) {
            nodes[n].assigned.push_back(instance);
            return n;
        }
    }
    // Reuse the lowest free suffix so node ids stay unique after removals.
    std::size_t suffix = nodes.size() + 1;
    auto taken = [&](std::size_t k) {
        auto id = empty_node(tmpl, k).node_id;
        return std::any_of(nodes.begin(), nodes.end(),
                           [&](const NodeCapacity& n) { return n.node_id == id; });
    };
    while (taken(suffix)) ++suffix;
    nodes.push_back(empty_node(tmpl, suffix));
    nodes.back().assigned.push_back(instance);
    return nodes.size() - 1;
}

namespace {

struct BruteForce {
    std::span<const ServiceInstanceSpec> items;
    std::vector<std::size_t> order;
    std::int64_t cpu_cap = 0, mem_cap = 0;
    std::vector<std::int64_t> cpu, mem;
    std::vector<int> bin_of;
    std::vector<int> best_bin_of;
    std::size_t best = 0;

    void search(std::size_t depth, std::size_t open) {
        if (open >= best) return;
        if (depth == order.size()) {
            best = open;
            best_bin_of = bin_of;
            return;
        }
        const auto& s = items[order[depth]];
        for (std::size_t b = 0; b < open; ++b) {
            if (cpu[b] + s.cpu_millicores <= cpu_cap && mem[b] + s.mem_mb <= mem_cap) {
                cpu[b] += s.cpu_millicores;
                mem[b] += s.mem_mb;
                bin_of[order[depth]] = static_cast<int>(b);
                search(depth + 1, open);
                cpu[b] -= s.cpu_millicores;
                mem[b] -= s.mem_mb;
            }
        }
        // A fresh bin is symmetric across all empty bins, so only try one.
        cpu[open] = s.cpu_millicores;
        mem[open] = s.mem_mb;
        bin_of[order[depth]] = static_cast<int>(open);
        search(depth + 1, open + 1);
        cpu[open] = mem[open] = 0;
    }
};

}  // namespace

Placement place_optimal_bruteforce(std::span<const ServiceInstanceSpec> instances,
                                   const NodeCapacity& tmpl) {
    if (instances.size() > 10)
        throw std::invalid_argument("exhaustive placement is limited to 10 instances");
    check_placeable(instances, tmpl);
    if (instances.empty()) return {};

    BruteForce bf;
    bf.items = instances;
    bf.cpu_cap = tmpl.cpu_millicores_total;
    bf.mem_cap = tmpl.mem_mb_total;
    bf.order.resize(instances.size());
    std::iota(bf.order.begin(), bf.order.end(), 0);
    // Large items first tightens the bound early.
    std::sort(bf.order.begin(), bf.order.end(), [&](std::size_t a, std::size_t b) {
        return instances[a].cpu_millicores * tmpl.mem_mb_total + instances[a].mem_mb * tmpl.cpu_millicores_total >
               instances[b].cpu_millicores * tmpl.mem_mb_total + instances[b].mem_mb * tmpl.cpu_millicores_total;
    });
    bf.cpu.assign(instances.size(), 0);
    bf.mem.assign(instances.size(), 0);
    bf.bin_of.assign(instances.size(), -1);
    bf.best = instances.size() + 1;
    bf.search(0, 0);

    Placement nodes;
    for (std::size_t b = 0; b < bf.best; ++b) nodes.push_back(empty_node(tmpl, b));
    for (std::size_t i = 0; i < instances.size(); ++i)
        nodes[static_cast<std::size_t>(bf.best_bin_of[i])].assigned.push_back(instances[i]);
    return nodes;
}

}  // namespace offload
