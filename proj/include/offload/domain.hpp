#pragma once

// Core vocabulary shared by the store, estimator, orchestration and runtime.

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace offload {

using Nanos = std::chrono::nanoseconds;

inline Nanos from_ms(double ms) {
    return Nanos(static_cast<std::int64_t>(ms * 1e6 + (ms >= 0 ? 0.5 : -0.5)));
}
inline double to_ms(Nanos d) { return static_cast<double>(d.count()) / 1e6; }

enum class DataType { Bulk, Stream, Control };
enum class Modulation { BPSK, QPSK, QAM16, QAM64 };
enum class RequestKind { UserAssign, ResourceQuery, ResourceUpdate, TrafficEngineer, ChannelEstimate };
enum class Status { Ok, Timeout, Rejected, Failed };

std::string_view to_string(DataType v);
std::string_view to_string(Modulation v);
std::string_view to_string(RequestKind v);
std::string_view to_string(Status v);

// Parsers throw std::invalid_argument on unknown names.
DataType parse_data_type(std::string_view s);
Modulation parse_modulation(std::string_view s);
RequestKind parse_request_kind(std::string_view s);
Status parse_status(std::string_view s);

// Constellation size M.
int constellation_size(Modulation m);

struct QosRequirements {
    double bitrate_bps = 1e9;
    double ber_max = 1e-3;
    double bandwidth_hz = 10e9;
    DataType data_type = DataType::Bulk;
    double deadline_ms = 1000.0;

    bool operator==(const QosRequirements&) const = default;
};

inline constexpr double kMinFrequencyHz = 0.1e12;
inline constexpr double kMaxFrequencyHz = 10e12;

struct ChannelState {
    double frequency_hz = 300e9;
    double distance_m = 10.0;
    double humidity_pct = 40.0;
    double temperature_c = 20.0;
    std::optional<double> measured_snr_db;

    bool operator==(const ChannelState&) const = default;
};

struct ChannelConfig {
    Modulation modulation = Modulation::BPSK;
    double code_rate = 1.0;
    double bandwidth_hz = 0.0;
    double tx_power_dbm = 0.0;
    double predicted_snr_db = 0.0;
    double predicted_ber = 0.5;

    bool operator==(const ChannelConfig&) const = default;
};

// Bucket indices over (frequency, distance, humidity, temperature, bitrate
// decade, ber_max exponent, bandwidth decade).
struct ConfigKey {
    std::array<std::int64_t, 7> buckets{};

    auto operator<=>(const ConfigKey&) const = default;
    bool operator==(const ConfigKey&) const = default;
};

struct ConfigKeyHash {
    std::size_t operator()(const ConfigKey& k) const noexcept;
};

// Linear bucket widths; bitrate, ber_max and bandwidth always bucket by decade.
struct BucketGrid {
    double frequency_hz = 10e9;
    double distance_m = 1.0;
    double humidity_pct = 10.0;
    double temperature_c = 5.0;
};

struct RequestEnvelope {
    std::uint64_t id = 0;
    RequestKind kind = RequestKind::ChannelEstimate;
    QosRequirements qos;
    ChannelState state;
    Nanos arrival_ts{0};
    double deadline_ms = 1000.0;

    bool operator==(const RequestEnvelope&) const = default;
};

struct ResponseEnvelope {
    std::uint64_t id = 0;
    Status status = Status::Ok;
    std::optional<ChannelConfig> config;
    Nanos completion_ts{0};
    std::uint64_t payload_bytes = 0;

    bool operator==(const ResponseEnvelope&) const = default;
};

// Returns the request unchanged iff every field invariant holds; otherwise
// throws ValidationError listing each violated field.
RequestEnvelope validate_request(const RequestEnvelope& raw);

ConfigKey make_config_key(const QosRequirements& qos, const ChannelState& state,
                          const BucketGrid& grid = {});

// floor(log10(x)) with exact behaviour at powers of ten; x must be > 0.
std::int64_t decade_of(double x);

}  // namespace offload

template <>
struct std::hash<offload::ConfigKey> : offload::ConfigKeyHash {};
