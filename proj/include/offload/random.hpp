#pragma once

// Seeded random streams and the service/latency distributions. The engine is
// std::mt19937_64; the transforms are written out here because the standard
// distribution classes are not reproducible across library implementations.

#include <cstdint>
#include <random>
#include <string_view>

#include "offload/codec.hpp"

namespace offload {

std::uint64_t splitmix64(std::uint64_t x);

// Independent substream seed for a named entity (user, instance, link).
std::uint64_t derive_seed(std::uint64_t master, std::string_view entity, std::uint64_t index = 0);

using Rng = std::mt19937_64;

// Uniform on the open interval (0, 1).
double uniform_open(Rng& rng);
double standard_normal(Rng& rng);

struct Distribution {
    enum class Kind { Constant, Uniform, Exponential, Lognormal };

    Kind kind = Kind::Constant;
    // Constant: a = value. Uniform: [a, b]. Exponential: a = mean.
    // Lognormal: a = mu, b = sigma of the underlying normal (log ms).
    double a = 0.0;
    double b = 0.0;

    static Distribution constant(double ms) { return {Kind::Constant, ms, 0.0}; }
    static Distribution uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
    static Distribution exponential(double mean) { return {Kind::Exponential, mean, 0.0}; }
    static Distribution lognormal(double mu, double sigma) { return {Kind::Lognormal, mu, sigma}; }
    // Lognormal with the given mean and coefficient of variation.
    static Distribution lognormal_mean_cv(double mean, double cv);

    double sample_ms(Rng& rng) const;
    double mean_ms() const;

    bool operator==(const Distribution&) const = default;
};

void to_json(Json& j, const Distribution& d);
// Accepts {"kind":"constant","value_ms"}, {"kind":"uniform","a_ms","b_ms"},
// {"kind":"exponential","mean_ms"}, {"kind":"lognormal","mu","sigma"} or
// {"kind":"lognormal","mean_ms","cv"}.
void from_json(const Json& j, Distribution& d);

}  // namespace offload
