#pragma once

// Minimal HTTP/1.1 framing: GET/POST, Content-Length bodies, keep-alive.
// No chunked transfer coding.

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace offload {

struct HttpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HttpMessage {
    // Request line fields (requests only).
    std::string method;
    std::string target;
    // Status line fields (responses only).
    int status = 0;
    std::string reason;
    // Header names are lower-cased.
    std::map<std::string, std::string> headers;
    std::string body;
    bool keep_alive = true;

    std::string path() const;
    // Value of a query parameter, percent-decoding not applied.
    std::optional<std::string> query(std::string_view name) const;
    const std::string* header(const std::string& lower_name) const;
};

// Incremental parser. Feed bytes as they arrive; next() yields complete
// messages in order. Throws HttpError on malformed input.
class HttpParser {
public:
    enum class Kind { Request, Response };

    explicit HttpParser(Kind kind, std::size_t max_body = 1 << 20) : kind_(kind), max_body_(max_body) {}

    void feed(std::string_view bytes) { buffer_.append(bytes.data(), bytes.size()); }
    std::optional<HttpMessage> next();
    std::size_t buffered() const { return buffer_.size() - offset_; }

private:
    Kind kind_;
    std::size_t max_body_;
    std::string buffer_;
    std::size_t offset_ = 0;
};

std::string_view reason_phrase(int status);
std::string format_response(int status, std::string_view body, bool keep_alive = true,
                            std::string_view content_type = "application/json");
std::string format_request(std::string_view method, std::string_view target, std::string_view host,
                           std::string_view body = {}, std::string_view content_type = "application/json");

// RFC 4648 url-safe alphabet without padding. decode throws std::invalid_argument.
std::string base64url_encode(std::string_view bytes);
std::string base64url_decode(std::string_view text);

}  // namespace offload
