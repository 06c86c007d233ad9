#include "offload/codec.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "offload/errors.hpp"

namespace offload {

namespace {

template <typename T>
void get_optional(const Json& j, const char* key, std::optional<T>& out) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null())
        out.reset();
    else
        out = it->template get<T>();
}

}  // namespace

void to_json(Json& j, const QosRequirements& v) {
    j = Json{{"bitrate_bps", v.bitrate_bps},
             {"ber_max", v.ber_max},
             {"bandwidth_hz", v.bandwidth_hz},
             {"data_type", to_string(v.data_type)},
             {"deadline_ms", v.deadline_ms}};
}

void from_json(const Json& j, QosRequirements& v) {
    j.at("bitrate_bps").get_to(v.bitrate_bps);
    j.at("ber_max").get_to(v.ber_max);
    j.at("bandwidth_hz").get_to(v.bandwidth_hz);
    v.data_type = parse_data_type(j.at("data_type").get<std::string>());
    j.at("deadline_ms").get_to(v.deadline_ms);
}

void to_json(Json& j, const ChannelState& v) {
    j = Json{{"frequency_hz", v.frequency_hz},
             {"distance_m", v.distance_m},
             {"humidity_pct", v.humidity_pct},
             {"temperature_c", v.temperature_c},
             {"measured_snr_db", v.measured_snr_db ? Json(*v.measured_snr_db) : Json(nullptr)}};
}

void from_json(const Json& j, ChannelState& v) {
    j.at("frequency_hz").get_to(v.frequency_hz);
    j.at("distance_m").get_to(v.distance_m);
    j.at("humidity_pct").get_to(v.humidity_pct);
    j.at("temperature_c").get_to(v.temperature_c);
    get_optional(j, "measured_snr_db", v.measured_snr_db);
}

void to_json(Json& j, const ChannelConfig& v) {
    j = Json{{"modulation", to_string(v.modulation)},
             {"code_rate", v.code_rate},
             {"bandwidth_hz", v.bandwidth_hz},
             {"tx_power_dbm", v.tx_power_dbm},
             {"predicted_snr_db", v.predicted_snr_db},
             {"predicted_ber", v.predicted_ber}};
}

void from_json(const Json& j, ChannelConfig& v) {
    v.modulation = parse_modulation(j.at("modulation").get<std::string>());
    j.at("code_rate").get_to(v.code_rate);
    j.at("bandwidth_hz").get_to(v.bandwidth_hz);
    j.at("tx_power_dbm").get_to(v.tx_power_dbm);
    j.at("predicted_snr_db").get_to(v.predicted_snr_db);
    j.at("predicted_ber").get_to(v.predicted_ber);
}

void to_json(Json& j, const ConfigKey& v) {
    j = Json::array();
    for (auto b : v.buckets) j.push_back(b);
}

void from_json(const Json& j, ConfigKey& v) {
    if (!j.is_array() || j.size() != v.buckets.size())
        throw std::invalid_argument("config key must be an array of 7 integers");
    for (std::size_t i = 0; i < v.buckets.size(); ++i) {
        if (!j[i].is_number_integer())
            throw std::invalid_argument("config key must be an array of 7 integers");
        v.buckets[i] = j[i].get<std::int64_t>();
    }
}

void to_json(Json& j, const BucketGrid& v) {
    j = Json{{"frequency_hz", v.frequency_hz},
             {"distance_m", v.distance_m},
             {"humidity_pct", v.humidity_pct},
             {"temperature_c", v.temperature_c}};
}

void from_json(const Json& j, BucketGrid& v) {
    v.frequency_hz = j.value("frequency_hz", v.frequency_hz);
    v.distance_m = j.value("distance_m", v.distance_m);
    v.humidity_pct = j.value("humidity_pct", v.humidity_pct);
    v.temperature_c = j.value("temperature_c", v.temperature_c);
    if (!(v.frequency_hz > 0 && v.distance_m > 0 && v.humidity_pct > 0 && v.temperature_c > 0))
        throw std::invalid_argument("bucket widths must be positive");
}

void to_json(Json& j, const RequestEnvelope& v) {
    j = Json{{"id", v.id},
             {"kind", to_string(v.kind)},
             {"qos", v.qos},
             {"state", v.state},
             {"arrival_ts", v.arrival_ts.count()},
             {"deadline_ms", v.deadline_ms}};
}

void from_json(const Json& j, RequestEnvelope& v) {
    j.at("id").get_to(v.id);
    v.kind = parse_request_kind(j.at("kind").get<std::string>());
    j.at("qos").get_to(v.qos);
    j.at("state").get_to(v.state);
    v.arrival_ts = Nanos(j.value("arrival_ts", std::int64_t{0}));
    v.deadline_ms = j.value("deadline_ms", v.qos.deadline_ms);
}

void to_json(Json& j, const ResponseEnvelope& v) {
    j = Json{{"id", v.id},
             {"status", to_string(v.status)},
             {"config", v.config ? Json(*v.config) : Json(nullptr)},
             {"completion_ts", v.completion_ts.count()},
             {"payload_bytes", v.payload_bytes}};
}

void from_json(const Json& j, ResponseEnvelope& v) {
    j.at("id").get_to(v.id);
    v.status = parse_status(j.at("status").get<std::string>());
    get_optional(j, "config", v.config);
    v.completion_ts = Nanos(j.at("completion_ts").get<std::int64_t>());
    j.at("payload_bytes").get_to(v.payload_bytes);
}

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

Json parse_json(std::string_view text, const std::string& origin) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
        throw ParseError(origin, line_of_offset(text, offset), e.what());
    }
}

Json load_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_json(ss.str(), path);
}

namespace {

void put_string(std::string& out, std::string_view v) {
    out += '"';
    for (char c : v) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", static_cast<unsigned>(c));
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    out += '"';
}

void put_double(std::string& out, double v) {
    if (!std::isfinite(v)) {
        out += "null";
        return;
    }
    char buf[64];
    char* end = nlohmann::detail::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, end);
}

// Same bytes as Json(response).dump(), with payload_bytes appended last.
std::string response_prefix(const ResponseEnvelope& r) {
    std::string out;
    out.reserve(256);
    out += "{\"id\":";
    out += std::to_string(r.id);
    out += ",\"status\":";
    put_string(out, to_string(r.status));
    out += ",\"config\":";
    if (r.config) {
        const auto& c = *r.config;
        out += "{\"modulation\":";
        put_string(out, to_string(c.modulation));
        out += ",\"code_rate\":";
        put_double(out, c.code_rate);
        out += ",\"bandwidth_hz\":";
        put_double(out, c.bandwidth_hz);
        out += ",\"tx_power_dbm\":";
        put_double(out, c.tx_power_dbm);
        out += ",\"predicted_snr_db\":";
        put_double(out, c.predicted_snr_db);
        out += ",\"predicted_ber\":";
        put_double(out, c.predicted_ber);
        out += '}';
    } else {
        out += "null";
    }
    out += ",\"completion_ts\":";
    out += std::to_string(r.completion_ts.count());
    out += ",\"payload_bytes\":";
    return out;
}

std::size_t digits(std::uint64_t v) {
    std::size_t n = 1;
    while (v >= 10) v /= 10, ++n;
    return n;
}

}  // namespace

std::string serialize_response(ResponseEnvelope& response) {
    std::string body = response_prefix(response);
    // Smallest n with n == prefix + digits(n) + 1.
    std::uint64_t n = body.size() + 2;
    while (n != body.size() + digits(n) + 1) ++n;
    response.payload_bytes = n;
    body += std::to_string(n);
    body += '}';
    return body;
}

}  // namespace offload
