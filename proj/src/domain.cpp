#include "offload/domain.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "offload/errors.hpp"

namespace offload {

ValidationError::ValidationError(std::vector<FieldIssue> issues)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << "invalid request:";
          for (const auto& i : issues) os << ' ' << i.field << " (" << i.reason << ')';
          return os.str();
      }()),
      issues_(std::move(issues)) {}

bool ValidationError::mentions(const std::string& field) const {
    for (const auto& i : issues_)
        if (i.field == field) return true;
    return false;
}

ParseError::ParseError(std::string origin, std::size_t line, const std::string& what)
    : std::runtime_error(origin + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
      origin_(std::move(origin)),
      line_(line) {}

std::string_view to_string(DataType v) {
    switch (v) {
        case DataType::Bulk: return "bulk";
        case DataType::Stream: return "stream";
        case DataType::Control: return "control";
    }
    return "?";
}

std::string_view to_string(Modulation v) {
    switch (v) {
        case Modulation::BPSK: return "BPSK";
        case Modulation::QPSK: return "QPSK";
        case Modulation::QAM16: return "QAM16";
        case Modulation::QAM64: return "QAM64";
    }
    return "?";
}

std::string_view to_string(RequestKind v) {
    switch (v) {
        case RequestKind::UserAssign: return "UserAssign";
        case RequestKind::ResourceQuery: return "ResourceQuery";
        case RequestKind::ResourceUpdate: return "ResourceUpdate";
        case RequestKind::TrafficEngineer: return "TrafficEngineer";
        case RequestKind::ChannelEstimate: return "ChannelEstimate";
    }
    return "?";
}

std::string_view to_string(Status v) {
    switch (v) {
        case Status::Ok: return "Ok";
        case Status::Timeout: return "Timeout";
        case Status::Rejected: return "Rejected";
        case Status::Failed: return "Failed";
    }
    return "?";
}

namespace {
template <typename E, std::size_t N>
E parse_enum(std::string_view s, const E (&values)[N], const char* what) {
    for (E v : values)
        if (to_string(v) == s) return v;
    throw std::invalid_argument(std::string("unknown ") + what + " '" + std::string(s) + "'");
}
}  // namespace

DataType parse_data_type(std::string_view s) {
    static constexpr DataType all[] = {DataType::Bulk, DataType::Stream, DataType::Control};
    return parse_enum(s, all, "data_type");
}

Modulation parse_modulation(std::string_view s) {
    static constexpr Modulation all[] = {Modulation::BPSK, Modulation::QPSK, Modulation::QAM16,
                                         Modulation::QAM64};
    return parse_enum(s, all, "modulation");
}

RequestKind parse_request_kind(std::string_view s) {
    static constexpr RequestKind all[] = {RequestKind::UserAssign, RequestKind::ResourceQuery,
                                          RequestKind::ResourceUpdate, RequestKind::TrafficEngineer,
                                          RequestKind::ChannelEstimate};
    return parse_enum(s, all, "request kind");
}

Status parse_status(std::string_view s) {
    static constexpr Status all[] = {Status::Ok, Status::Timeout, Status::Rejected, Status::Failed};
    return parse_enum(s, all, "status");
}

int constellation_size(Modulation m) {
    switch (m) {
        case Modulation::BPSK: return 2;
        case Modulation::QPSK: return 4;
        case Modulation::QAM16: return 16;
        case Modulation::QAM64: return 64;
    }
    return 2;
}

std::size_t ConfigKeyHash::operator()(const ConfigKey& k) const noexcept {
    // FNV-1a over the bucket words.
    std::uint64_t h = 1469598103934665603ULL;
    for (std::int64_t b : k.buckets) {
        auto v = static_cast<std::uint64_t>(b);
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffU;
            h *= 1099511628211ULL;
        }
    }
    return static_cast<std::size_t>(h);
}

RequestEnvelope validate_request(const RequestEnvelope& raw) {
    std::vector<FieldIssue> issues;
    auto require = [&](bool ok, const char* field, const char* reason) {
        if (!ok) issues.push_back({field, reason});
    };
    const auto& q = raw.qos;
    const auto& s = raw.state;
    // Written as positive comparisons so NaN fails every check.
    require(q.bitrate_bps > 0 && std::isfinite(q.bitrate_bps), "bitrate_bps", "must be > 0");
    require(q.ber_max > 0 && q.ber_max < 0.5, "ber_max", "must lie in (0, 0.5)");
    require(q.bandwidth_hz > 0 && std::isfinite(q.bandwidth_hz), "bandwidth_hz", "must be > 0");
    require(q.deadline_ms > 0 && std::isfinite(q.deadline_ms), "qos.deadline_ms", "must be > 0");
    require(s.frequency_hz >= kMinFrequencyHz && s.frequency_hz <= kMaxFrequencyHz, "frequency_hz",
            "must lie in [0.1, 10] THz");
    require(s.distance_m > 0 && std::isfinite(s.distance_m), "distance_m", "must be > 0");
    require(s.humidity_pct >= 0 && s.humidity_pct <= 100, "humidity_pct", "must lie in [0, 100]");
    require(s.temperature_c >= -40 && s.temperature_c <= 85, "temperature_c",
            "must lie in [-40, 85]");
    require(!s.measured_snr_db || std::isfinite(*s.measured_snr_db), "measured_snr_db",
            "must be finite");
    require(raw.deadline_ms > 0 && std::isfinite(raw.deadline_ms), "deadline_ms", "must be > 0");
    require(raw.arrival_ts.count() >= 0, "arrival_ts", "must be >= 0");
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return raw;
}

std::int64_t decade_of(double x) {
    auto e = static_cast<std::int64_t>(std::floor(std::log10(x)));
    // log10 may land one ulp off at exact powers of ten.
    if (std::pow(10.0, static_cast<double>(e + 1)) <= x) ++e;
    if (std::pow(10.0, static_cast<double>(e)) > x) --e;
    return e;
}

namespace {
std::int64_t linear_bucket(double x, double width) {
    return static_cast<std::int64_t>(std::floor(x / width));
}
}  // namespace

ConfigKey make_config_key(const QosRequirements& qos, const ChannelState& state,
                          const BucketGrid& grid) {
    ConfigKey key;
    key.buckets = {
        linear_bucket(state.frequency_hz, grid.frequency_hz),
        linear_bucket(state.distance_m, grid.distance_m),
        linear_bucket(state.humidity_pct, grid.humidity_pct),
        linear_bucket(state.temperature_c, grid.temperature_c),
        decade_of(qos.bitrate_bps),
        decade_of(qos.ber_max),
        decade_of(qos.bandwidth_hz),
    };
    return key;
}

}  // namespace offload
