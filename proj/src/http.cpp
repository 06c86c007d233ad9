#include "offload/http.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cctype>

namespace offload {

namespace {

constexpr std::size_t kMaxHeaderBytes = 16 * 1024;

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::string HttpMessage::path() const { return target.substr(0, target.find('?')); }

std::optional<std::string> HttpMessage::query(std::string_view name) const {
    auto q = target.find('?');
    if (q == std::string::npos) return std::nullopt;
    std::string_view rest = std::string_view(target).substr(q + 1);
    while (!rest.empty()) {
        auto amp = rest.find('&');
        std::string_view pair = rest.substr(0, amp);
        auto eq = pair.find('=');
        if (pair.substr(0, eq) == name)
            return std::string(eq == std::string_view::npos ? std::string_view{} : pair.substr(eq + 1));
        if (amp == std::string_view::npos) break;
        rest.remove_prefix(amp + 1);
    }
    return std::nullopt;
}

const std::string* HttpMessage::header(const std::string& name) const {
    auto it = headers.find(name);
    return it == headers.end() ? nullptr : &it->second;
}

std::optional<HttpMessage> HttpParser::next() {
    std::string_view data = std::string_view(buffer_).substr(offset_);
    auto end = data.find("\r\n\r\n");
    if (end == std::string_view::npos) {
        if (data.size() > kMaxHeaderBytes) throw HttpError("header block too large");
        return std::nullopt;
    }
    std::string_view head = data.substr(0, end);
    HttpMessage msg;

    auto line_end = head.find("\r\n");
    std::string_view first = head.substr(0, line_end);
    auto sp1 = first.find(' ');
    if (sp1 == std::string_view::npos) throw HttpError("malformed start line");
    std::string_view version;
    if (kind_ == Kind::Request) {
        auto sp2 = first.find(' ', sp1 + 1);
        if (sp2 == std::string_view::npos) throw HttpError("malformed request line");
        msg.method = first.substr(0, sp1);
        msg.target = first.substr(sp1 + 1, sp2 - sp1 - 1);
        version = first.substr(sp2 + 1);
        if (msg.target.empty() || msg.target.front() != '/') throw HttpError("bad request target");
    } else {
        version = first.substr(0, sp1);
        auto rest = first.substr(sp1 + 1);
        auto sp2 = rest.find(' ');
        auto code = rest.substr(0, sp2);
        auto res = std::from_chars(code.data(), code.data() + code.size(), msg.status);
        if (res.ec != std::errc() || msg.status < 100 || msg.status > 999) throw HttpError("bad status code");
        if (sp2 != std::string_view::npos) msg.reason = rest.substr(sp2 + 1);
    }
    if (version != "HTTP/1.1" && version != "HTTP/1.0") throw HttpError("unsupported HTTP version");
    msg.keep_alive = version == "HTTP/1.1";

    std::string_view rest = line_end == std::string_view::npos ? std::string_view{} : head.substr(line_end + 2);
    while (!rest.empty()) {
        auto nl = rest.find("\r\n");
        std::string_view line = rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 2);
        auto colon = line.find(':');
        if (colon == std::string_view::npos || colon == 0) throw HttpError("malformed header line");
        msg.headers[lower(line.substr(0, colon))] = std::string(trim(line.substr(colon + 1)));
    }

    if (const auto* te = msg.header("transfer-encoding"); te && lower(*te) != "identity")
        throw HttpError("transfer-encoding is not supported");
    std::size_t length = 0;
    if (const auto* cl = msg.header("content-length")) {
        auto res = std::from_chars(cl->data(), cl->data() + cl->size(), length);
        if (res.ec != std::errc() || res.ptr != cl->data() + cl->size()) throw HttpError("bad content-length");
        if (length > max_body_) throw HttpError("body too large");
    }
    if (const auto* conn = msg.header("connection")) {
        auto v = lower(*conn);
        if (v == "close") msg.keep_alive = false;
        else if (v == "keep-alive") msg.keep_alive = true;
    }

    std::size_t total = end + 4 + length;
    if (data.size() < total) return std::nullopt;
    msg.body = data.substr(end + 4, length);
    offset_ += total;
    if (offset_ == buffer_.size()) {
        buffer_.clear();
        offset_ = 0;
    } else if (offset_ > 64 * 1024) {
        buffer_.erase(0, offset_);
        offset_ = 0;
    }
    return msg;
}

std::string_view reason_phrase(int status) {
    switch (status) {
        case 200: return "OK";
        case 201: return "Created";
        case 400: return "Bad Request";
        case 404: return "Not Found";
        case 405: return "Method Not Allowed";
        case 429: return "Too Many Requests";
        case 500: return "Internal Server Error";
        case 503: return "Service Unavailable";
        case 504: return "Gateway Timeout";
        default: return "Unknown";
    }
}

std::string format_response(int status, std::string_view body, bool keep_alive, std::string_view content_type) {
    std::string out;
    out.reserve(128 + body.size());
    out += "HTTP/1.1 ";
    out += std::to_string(status);
    out += ' ';
    out += reason_phrase(status);
    out += "\r\nContent-Type: ";
    out += content_type;
    out += "\r\nContent-Length: ";
    out += std::to_string(body.size());
    out += keep_alive ? "\r\nConnection: keep-alive\r\n\r\n" : "\r\nConnection: close\r\n\r\n";
    out += body;
    return out;
}

std::string format_request(std::string_view method, std::string_view target, std::string_view host,
                           std::string_view body, std::string_view content_type) {
    std::string out;
    out.reserve(128 + body.size());
    out += method;
    out += ' ';
    out += target;
    out += " HTTP/1.1\r\nHost: ";
    out += host;
    if (!body.empty() || method == "POST") {
        out += "\r\nContent-Type: ";
        out += content_type;
        out += "\r\nContent-Length: ";
        out += std::to_string(body.size());
    }
    out += "\r\n\r\n";
    out += body;
    return out;
}

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";

constexpr std::array<int, 256> make_reverse() {
    std::array<int, 256> r{};
    for (auto& v : r) v = -1;
    for (int i = 0; i < 64; ++i) r[static_cast<unsigned char>(kAlphabet[i])] = i;
    return r;
}

constexpr auto kReverse = make_reverse();

}  // namespace

std::string base64url_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() * 4 + 2) / 3);
    std::uint32_t acc = 0;
    int bits = 0;
    for (unsigned char c : bytes) {
        acc = (acc << 8) | c;
        bits += 8;
        while (bits >= 6) {
            bits -= 6;
            out += kAlphabet[(acc >> bits) & 63];
        }
    }
    if (bits > 0) out += kAlphabet[(acc << (6 - bits)) & 63];
    return out;
}

std::string base64url_decode(std::string_view text) {
    while (!text.empty() && text.back() == '=') text.remove_suffix(1);
    if (text.size() % 4 == 1) throw std::invalid_argument("invalid base64url length");
    std::string out;
    out.reserve(text.size() * 3 / 4);
    std::uint32_t acc = 0;
    int bits = 0;
    for (unsigned char c : text) {
        int v = kReverse[c];
        if (v < 0) throw std::invalid_argument("invalid base64url character");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out += static_cast<char>((acc >> bits) & 0xff);
        }
    }
    return out;
}

}  // namespace offload
