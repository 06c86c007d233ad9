#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/epoll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>

#include "offload/errors.hpp"
#include "offload/http.hpp"
#include "offload/loadgen.hpp"

namespace offload {

std::pair<std::string, int> parse_endpoint(std::string_view url) {
    if (url.substr(0, 7) == "http://") url.remove_prefix(7);
    while (!url.empty() && url.back() == '/') url.remove_suffix(1);
    auto colon = url.rfind(':');
    std::string host(url.substr(0, colon));
    int port = 80;
    if (colon != std::string_view::npos) {
        auto p = url.substr(colon + 1);
        auto res = std::from_chars(p.data(), p.data() + p.size(), port);
        if (res.ec != std::errc() || res.ptr != p.data() + p.size() || port <= 0 || port > 65535)
            throw std::invalid_argument("bad port in '" + std::string(url) + "'");
    }
    if (host.empty()) throw std::invalid_argument("missing host in url");
    return {host, port};
}

namespace {

using Clock = std::chrono::steady_clock;

sockaddr_in resolve(const std::string& host, int port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0)
        throw TargetUnreachable("cannot resolve " + host + ": " + ::gai_strerror(rc));
    sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
    ::freeaddrinfo(res);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    return addr;
}

// One blocking request/response on a fresh connection.
HttpMessage roundtrip(const sockaddr_in& addr, const std::string& request, int timeout_ms) {
    int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    timeval tv{timeout_ms / 1000, (timeout_ms % 1000) * 1000};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        std::string err = std::strerror(errno);
        ::close(fd);
        throw TargetUnreachable("connect failed: " + err);
    }
    std::size_t off = 0;
    while (off < request.size()) {
        ssize_t n = ::send(fd, request.data() + off, request.size() - off, MSG_NOSIGNAL);
        if (n <= 0) {
            ::close(fd);
            throw TargetUnreachable("send failed");
        }
        off += static_cast<std::size_t>(n);
    }
    HttpParser parser(HttpParser::Kind::Response);
    char buf[16384];
    for (;;) {
        if (auto msg = parser.next()) {
            ::close(fd);
            return *msg;
        }
        ssize_t n = ::recv(fd, buf, sizeof buf, 0);
        if (n <= 0) {
            ::close(fd);
            throw TargetUnreachable("no response from target");
        }
        parser.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    }
}

Status status_of(int http) {
    switch (http) {
        case 200:
        case 201:
        case 404: return Status::Ok;
        case 504: return Status::Timeout;
        case 429: return Status::Rejected;
        default: return Status::Failed;
    }
}

struct Client {
    int fd = -1;
    bool connected = false;
    bool busy = false;
    bool want_write = false;
    HttpParser parser{HttpParser::Kind::Response};
    std::string out;
    std::size_t off = 0;
    Nanos issued_at{0};
    Nanos resume_at{0};
    std::optional<UserStream> stream;
};

}  // namespace

LiveTarget::LiveTarget(std::string host, int port) : host_(std::move(host)), port_(port) {
    auto addr = resolve(host_, port_);
    HttpMessage info;
    try {
        info = roundtrip(addr, format_request("GET", "/info", host_), 5000);
    } catch (const HttpError& e) {
        throw TargetUnreachable(std::string("bad response from target: ") + e.what());
    }
    if (info.status != 200) throw TargetUnreachable("/info returned " + std::to_string(info.status));
    try {
        Json j = Json::parse(info.body);
        mode_ = j.at("mode").get<std::string>();
        site_ = j.at("site").get<std::string>();
        j.at("grid").get_to(grid_);
        j.at("estimator").get_to(params_);
    } catch (const std::exception& e) {
        throw TargetUnreachable(std::string("unexpected /info payload: ") + e.what());
    }
}

void LiveTarget::prime(const Workload& workload) {
    if (primed_ >= workload.key_pool) return;
    auto addr = resolve(host_, port_);
    auto pool = make_key_pool(workload.key_pool, grid_, params_);
    // Each write takes a full write-service round trip, so prime in parallel.
    std::atomic<std::size_t> next{primed_};
    std::mutex mu;
    std::exception_ptr first;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < pool.size();) {
            try {
                StoreRecord rec{pool[i].key, pool[i].config, 0, Nanos{0}};
                auto resp = roundtrip(addr, format_request("POST", "/config", host_, serialize_record(rec)), 30000);
                if (resp.status != 201)
                    throw TargetUnreachable("priming write returned " + std::to_string(resp.status));
            } catch (...) {
                std::lock_guard lock(mu);
                if (!first) first = std::current_exception();
                next = pool.size();
            }
        }
    };
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < std::min<std::size_t>(16, pool.size() - primed_); ++w) workers.emplace_back(worker);
    for (auto& t : workers) t.join();
    if (first) std::rethrow_exception(first);
    primed_ = pool.size();
}

LevelResult LiveTarget::run_level(int users, const Workload& workload, const SweepPlan& plan) {
    workload.validate();
    if (users == 0) {
        LevelRecorder empty(Nanos{0}, from_ms(plan.measure_s * 1000.0));
        return empty.finish(Nanos{0}, mode_, site_, workload.name, 0);
    }
    prime(workload);
    auto addr = resolve(host_, port_);
    auto pool = make_key_pool(workload.key_pool, grid_, params_);
    std::string deadline = format_number(workload.deadline_ms);
    std::vector<std::string> get_targets, post_bodies;
    for (const auto& e : pool) {
        get_targets.push_back("/config?key=" + base64url_encode(Json(e.key).dump()) + "&deadline_ms=" + deadline);
        post_bodies.push_back(serialize_record(StoreRecord{e.key, e.config, 0, Nanos{0}}));
    }
    std::string post_target = "/config?deadline_ms=" + deadline;

    Nanos ws = from_ms(plan.warmup_s * 1000.0);
    Nanos we = ws + from_ms(plan.measure_s * 1000.0);
    Nanos drain_until = we + from_ms(workload.deadline_ms) + std::chrono::seconds(5);
    LevelRecorder rec(ws, we);
    auto t0 = Clock::now();
    auto now = [&] { return std::chrono::duration_cast<Nanos>(Clock::now() - t0); };

    int ep = ::epoll_create1(EPOLL_CLOEXEC);
    std::vector<Client> clients(static_cast<std::size_t>(users));
    std::uint64_t wseed = derive_seed(workload.seed, "live-workload", static_cast<std::uint64_t>(users));
    std::uint64_t next_id = 1;
    std::size_t ever_connected = 0, connect_failures = 0;

    auto set_events = [&](std::size_t i, bool want_write) {
        Client& c = clients[i];
        if (c.want_write == want_write) return;
        c.want_write = want_write;
        epoll_event ev{};
        ev.events = EPOLLIN | EPOLLRDHUP | (want_write ? EPOLLOUT : 0u);
        ev.data.u64 = i;
        ::epoll_ctl(ep, EPOLL_CTL_MOD, c.fd, &ev);
    };
    auto open = [&](std::size_t i) {
        Client& c = clients[i];
        c.fd = ::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0);
        int one = 1;
        ::setsockopt(c.fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        c.connected = false;
        c.parser = HttpParser(HttpParser::Kind::Response);
        int rc = ::connect(c.fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr);
        if (rc == 0) {
            c.connected = true;
            ++ever_connected;
        }
        c.want_write = true;
        epoll_event ev{};
        ev.events = EPOLLIN | EPOLLOUT | EPOLLRDHUP;
        ev.data.u64 = i;
        ::epoll_ctl(ep, EPOLL_CTL_ADD, c.fd, &ev);
        if (rc != 0 && errno != EINPROGRESS) {
            c.connected = false;
        }
    };
    auto close_client = [&](std::size_t i) {
        Client& c = clients[i];
        if (c.fd >= 0) {
            ::epoll_ctl(ep, EPOLL_CTL_DEL, c.fd, nullptr);
            ::close(c.fd);
        }
        c.fd = -1;
        c.connected = false;
        c.out.clear();
        c.off = 0;
    };
    auto flush = [&](std::size_t i) -> bool {
        Client& c = clients[i];
        while (c.off < c.out.size()) {
            ssize_t n = ::send(c.fd, c.out.data() + c.off, c.out.size() - c.off, MSG_NOSIGNAL);
            if (n > 0) {
                c.off += static_cast<std::size_t>(n);
                continue;
            }
            if (n < 0 && errno == EINTR) continue;
            if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
                set_events(i, true);
                return true;
            }
            return false;
        }
        c.out.clear();
        c.off = 0;
        set_events(i, false);
        return true;
    };
    // Lost connection: the request in flight, if any, counts as failed.
    auto fail = [&](std::size_t i) {
        Client& c = clients[i];
        rec.connection_error();
        if (c.busy) {
            rec.completed(now(), c.issued_at, Status::Failed, 0);
            c.busy = false;
        }
        close_client(i);
        if (now() < we) open(i);
    };
    auto issue = [&](std::size_t i) {
        Client& c = clients[i];
        Nanos t = now();
        if (c.busy || !c.connected || t >= we) return;
        Operation op = c.stream->next(next_id++);
        switch (op.kind) {
            case OpKind::Read: c.out = format_request("GET", get_targets[op.pool_index], host_); break;
            case OpKind::Write:
                c.out = format_request("POST", post_target, host_, post_bodies[op.pool_index]);
                break;
            case OpKind::Estimate: c.out = format_request("POST", "/request", host_, Json(op.request).dump()); break;
        }
        c.off = 0;
        c.busy = true;
        c.issued_at = t;
        rec.issued(t);
        if (!flush(i)) fail(i);
    };
    auto after_response = [&](std::size_t i) {
        Client& c = clients[i];
        Nanos think = c.stream->think();
        if (think.count() == 0) issue(i);
        else c.resume_at = now() + think;
    };

    for (std::size_t i = 0; i < clients.size(); ++i) {
        clients[i].stream.emplace(wseed, i, workload, pool.size());
        open(i);
    }

    std::vector<epoll_event> events(2048);
    char buf[16384];
    for (;;) {
        Nanos t = now();
        bool any_busy = false;
        for (const auto& c : clients) any_busy = any_busy || c.busy;
        if (t >= we && !any_busy) break;
        if (t >= drain_until) break;
        if (users > 0 && t > std::chrono::seconds(5) && ever_connected == 0)
            break;

        Nanos wake = t < we ? we : drain_until;
        for (std::size_t i = 0; i < clients.size(); ++i) {
            Client& c = clients[i];
            if (c.connected && !c.busy && t < we) {
                if (c.resume_at <= t) issue(i);
                else wake = std::min(wake, c.resume_at);
            }
        }
        int timeout = static_cast<int>(std::clamp<std::int64_t>((wake - now()).count() / 1000000 + 1, 0, 50));
        int n = ::epoll_wait(ep, events.data(), static_cast<int>(events.size()), timeout);
        if (n < 0 && errno == EINTR) continue;
        for (int k = 0; k < n; ++k) {
            std::size_t i = events[k].data.u64;
            Client& c = clients[i];
            if (c.fd < 0) continue;
            auto ev = events[k].events;
            if (!c.connected) {
                int err = 0;
                socklen_t len = sizeof err;
                ::getsockopt(c.fd, SOL_SOCKET, SO_ERROR, &err, &len);
                if (err != 0 || (ev & (EPOLLERR | EPOLLHUP))) {
                    ++connect_failures;
                    rec.connection_error();
                    close_client(i);
                    continue;
                }
                if (!(ev & EPOLLOUT)) continue;
                c.connected = true;
                ++ever_connected;
                set_events(i, false);
                issue(i);
                continue;
            }
            if (ev & EPOLLOUT) {
                if (!flush(i)) {
                    fail(i);
                    continue;
                }
            }
            if (!(ev & (EPOLLIN | EPOLLRDHUP | EPOLLHUP | EPOLLERR))) continue;
            bool closed = false;
            for (;;) {
                ssize_t r = ::recv(c.fd, buf, sizeof buf, 0);
                if (r > 0) {
                    c.parser.feed(std::string_view(buf, static_cast<std::size_t>(r)));
                    continue;
                }
                if (r < 0 && errno == EINTR) continue;
                if (r < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
                closed = true;
                break;
            }
            bool keep = true;
            try {
                while (auto msg = c.parser.next()) {
                    if (!c.busy) continue;
                    rec.completed(now(), c.issued_at, status_of(msg->status), msg->body.size());
                    c.busy = false;
                    keep = msg->keep_alive;
                }
            } catch (const HttpError&) {
                fail(i);
                continue;
            }
            if (closed || !keep) {
                if (c.busy) {
                    fail(i);
                    continue;
                }
                close_client(i);
                if (now() < we) open(i);
                continue;
            }
            if (!c.busy) after_response(i);
        }
    }

    for (std::size_t i = 0; i < clients.size(); ++i) {
        Client& c = clients[i];
        if (c.busy) {
            rec.connection_error();
            rec.completed(now(), c.issued_at, Status::Failed, 0);
            c.busy = false;
        }
        close_client(i);
    }
    ::close(ep);
    if (users > 0 && ever_connected == 0)
        throw TargetUnreachable("no connection to " + host_ + ":" + std::to_string(port_) + " (" +
                                std::to_string(connect_failures) + " failures)");
    return rec.finish(now(), mode_, site_, workload.name, users);
}

}  // namespace offload
