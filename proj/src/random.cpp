#include "offload/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace offload {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view entity, std::uint64_t index) {
    std::uint64_t h = splitmix64(master);
    for (char c : entity) h = splitmix64(h ^ static_cast<unsigned char>(c));
    return splitmix64(h ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

double uniform_open(Rng& rng) {
    // 53 random bits, shifted off zero.
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
    double u1 = uniform_open(rng);
    double u2 = uniform_open(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Distribution Distribution::lognormal_mean_cv(double mean, double cv) {
    double sigma2 = std::log1p(cv * cv);
    return lognormal(std::log(mean) - sigma2 / 2.0, std::sqrt(sigma2));
}

double Distribution::sample_ms(Rng& rng) const {
    switch (kind) {
        case Kind::Constant: return a;
        case Kind::Uniform: return a + (b - a) * uniform_open(rng);
        case Kind::Exponential: return -a * std::log(uniform_open(rng));
        case Kind::Lognormal: return std::exp(a + b * standard_normal(rng));
    }
    return a;
}

double Distribution::mean_ms() const {
    switch (kind) {
        case Kind::Constant: return a;
        case Kind::Uniform: return (a + b) / 2.0;
        case Kind::Exponential: return a;
        case Kind::Lognormal: return std::exp(a + b * b / 2.0);
    }
    return a;
}

void to_json(Json& j, const Distribution& d) {
    switch (d.kind) {
        case Distribution::Kind::Constant: j = Json{{"kind", "constant"}, {"value_ms", d.a}}; break;
        case Distribution::Kind::Uniform: j = Json{{"kind", "uniform"}, {"a_ms", d.a}, {"b_ms", d.b}}; break;
        case Distribution::Kind::Exponential: j = Json{{"kind", "exponential"}, {"mean_ms", d.a}}; break;
        case Distribution::Kind::Lognormal: j = Json{{"kind", "lognormal"}, {"mu", d.a}, {"sigma", d.b}}; break;
    }
}

void from_json(const Json& j, Distribution& d) {
    auto kind = j.at("kind").get<std::string>();
    if (kind == "constant") {
        d = Distribution::constant(j.at("value_ms").get<double>());
    } else if (kind == "uniform") {
        d = Distribution::uniform(j.at("a_ms").get<double>(), j.at("b_ms").get<double>());
        if (d.b < d.a) throw std::invalid_argument("uniform distribution needs a_ms <= b_ms");
    } else if (kind == "exponential") {
        d = Distribution::exponential(j.at("mean_ms").get<double>());
    } else if (kind == "lognormal") {
        if (j.contains("mean_ms"))
            d = Distribution::lognormal_mean_cv(j.at("mean_ms").get<double>(), j.at("cv").get<double>());
        else
            d = Distribution::lognormal(j.at("mu").get<double>(), j.at("sigma").get<double>());
    } else {
        throw std::invalid_argument("unknown distribution kind '" + kind + "'");
    }
    if (d.kind != Distribution::Kind::Lognormal && !(d.a >= 0))
        throw std::invalid_argument("distribution parameters must be >= 0");
    if (d.kind == Distribution::Kind::Lognormal && !(d.b >= 0))
        throw std::invalid_argument("lognormal sigma must be >= 0");
}

}  // namespace offload
