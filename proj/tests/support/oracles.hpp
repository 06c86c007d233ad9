#pragma once

// Reference computations written independently of the library code they check.

#include <boost/math/special_functions/erf.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "offload/domain.hpp"
#include "offload/placement.hpp"

namespace oracle {

using Big = boost::multiprecision::cpp_bin_float_50;

// Q(x) = erfc(x / sqrt 2) / 2 at 50 decimal digits.
inline Big q(const Big& x) {
    return boost::math::erfc(x / boost::multiprecision::sqrt(Big(2))) / 2;
}

// BER for linear SNR gamma.
inline double ber(offload::Modulation m, double gamma) {
    Big g(gamma);
    if (m == offload::Modulation::BPSK) return static_cast<double>(q(boost::multiprecision::sqrt(2 * g)));
    int M = offload::constellation_size(m);
    Big sqm = boost::multiprecision::sqrt(Big(M));
    Big k = Big(4) / Big(std::log2(M)) * (1 - 1 / sqm);
    return static_cast<double>(k * q(boost::multiprecision::sqrt(3 * g / (M - 1))));
}

// 20 log10(4 pi d f / c) at 50 digits.
inline double fspl_db(double d, double f) {
    Big pi = boost::math::constants::pi<Big>();
    Big v = 4 * pi * Big(d) * Big(f) / Big(299792458);
    return static_cast<double>(20 * boost::multiprecision::log10(v));
}

// Gillespie simulation of the closed machine-repairman chain: n users, c
// servers, exponential think (mean Z) and service (mean S). Returns
// completions per second.
inline double repairman_sim(int n, int c, double S_ms, double Z_ms, std::uint64_t events, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int k = 0;  // users at the station
    double t = 0.0;
    std::uint64_t done = 0;
    for (std::uint64_t e = 0; e < events; ++e) {
        double up = Z_ms > 0 ? (n - k) / Z_ms : 0.0;
        double down = std::min(k, c) / S_ms;
        double total = up + down;
        t += -std::log(1.0 - u(rng)) / total;
        if (u(rng) * total < up) {
            ++k;
        } else {
            --k;
            ++done;
        }
    }
    return static_cast<double>(done) / (t / 1000.0);
}

// Ceil(p/100 * n)-th order statistic by full sort.
inline double percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
    if (rank == 0) rank = 1;
    return v[rank - 1];
}

// Minimum bin count by trying every assignment of items to bins, bins in
// order of first use.
inline int min_bins(const std::vector<offload::ServiceInstanceSpec>& items, std::int64_t cpu, std::int64_t mem) {
    int n = static_cast<int>(items.size());
    if (n == 0) return 0;
    int best = n;
    std::vector<std::int64_t> bc, bm;
    auto rec = [&](auto&& self, int i) -> void {
        if (static_cast<int>(bc.size()) >= best) return;
        if (i == n) {
            best = static_cast<int>(bc.size());
            return;
        }
        for (std::size_t b = 0; b < bc.size(); ++b) {
            if (bc[b] + items[i].cpu_millicores <= cpu && bm[b] + items[i].mem_mb <= mem) {
                bc[b] += items[i].cpu_millicores;
                bm[b] += items[i].mem_mb;
                self(self, i + 1);
                bc[b] -= items[i].cpu_millicores;
                bm[b] -= items[i].mem_mb;
            }
        }
        bc.push_back(items[i].cpu_millicores);
        bm.push_back(items[i].mem_mb);
        self(self, i + 1);
        bc.pop_back();
        bm.pop_back();
    };
    rec(rec, 0);
    return best;
}

}  // namespace oracle
