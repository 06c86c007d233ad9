#pragma once

// Canonical JSON form of the domain types: snake_case keys in declaration
// order, absent optionals written as null.

#include <json.hpp>
#include <string>
#include <string_view>

#include "offload/domain.hpp"

namespace offload {

using Json = nlohmann::ordered_json;

void to_json(Json& j, const QosRequirements& v);
void from_json(const Json& j, QosRequirements& v);
void to_json(Json& j, const ChannelState& v);
void from_json(const Json& j, ChannelState& v);
void to_json(Json& j, const ChannelConfig& v);
void from_json(const Json& j, ChannelConfig& v);
void to_json(Json& j, const ConfigKey& v);
void from_json(const Json& j, ConfigKey& v);
void to_json(Json& j, const BucketGrid& v);
void from_json(const Json& j, BucketGrid& v);
void to_json(Json& j, const RequestEnvelope& v);
void from_json(const Json& j, RequestEnvelope& v);
void to_json(Json& j, const ResponseEnvelope& v);
void from_json(const Json& j, ResponseEnvelope& v);

// Parses text as JSON and converts to T; any JSON or schema problem becomes a
// ParseError naming `origin` and, for syntax errors, the line.
template <typename T>
T parse_as(std::string_view text, const std::string& origin);

Json parse_json(std::string_view text, const std::string& origin);
Json load_json_file(const std::string& path);

std::size_t line_of_offset(std::string_view text, std::size_t offset);

// Serialized response with payload_bytes equal to the byte length of the
// serialization itself.
std::string serialize_response(ResponseEnvelope& response);

}  // namespace offload

#include "offload/errors.hpp"

namespace offload {

template <typename T>
T parse_as(std::string_view text, const std::string& origin) {
    Json j = parse_json(text, origin);
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(origin, 0, e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(origin, 0, e.what());
    }
}

}  // namespace offload
