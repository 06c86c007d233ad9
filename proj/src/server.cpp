#include "offload/server.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/epoll.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <deque>
#include <iostream>
#include <mutex>
#include <unordered_map>

#include "offload/errors.hpp"
#include "offload/http.hpp"

namespace offload {

BindAddress parse_bind(std::string_view text) {
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos) throw std::invalid_argument("bind address must be host:port");
    BindAddress b;
    b.host = std::string(text.substr(0, colon));
    if (b.host.empty()) b.host = "0.0.0.0";
    auto p = text.substr(colon + 1);
    auto res = std::from_chars(p.data(), p.data() + p.size(), b.port);
    if (res.ec != std::errc() || res.ptr != p.data() + p.size() || b.port < 0 || b.port > 65535)
        throw std::invalid_argument("bad port '" + std::string(p) + "'");
    return b;
}

int http_status_for(Status s) {
    switch (s) {
        case Status::Ok: return 200;
        case Status::Timeout: return 504;
        case Status::Rejected: return 429;
        case Status::Failed: return 500;
    }
    return 500;
}

namespace {

struct Conn {
    int fd = -1;
    std::uint64_t id = 0;
    HttpParser parser{HttpParser::Kind::Request};
    std::deque<HttpMessage> pending;
    bool busy = false;
    bool close_after_write = false;
    bool want_write = false;
    std::string out;
    std::size_t out_off = 0;
};

struct Reply {
    int fd;
    std::uint64_t conn_id;
    std::string bytes;
    bool keep_alive;
};

std::string error_body(std::string_view msg) { return Json{{"error", std::string(msg)}}.dump(); }

}  // namespace

struct LiveServer::Impl {
    Scenario scenario;
    std::uint64_t seed;
    RealtimeExecutor exec;
    std::unique_ptr<ConfigStore> store;
    std::unique_ptr<ConfigStore> results;
    std::unique_ptr<Dispatcher> dispatcher;

    int listen_fd = -1;
    int epfd = -1;
    int wake_fd = -1;
    std::thread io;
    std::atomic<bool> draining{false};
    std::atomic<std::int64_t> grace_deadline_ns{0};

    std::unordered_map<int, std::unique_ptr<Conn>> conns;
    std::uint64_t next_conn_id = 1;
    std::uint64_t next_request_id = 1;
    std::atomic<std::int64_t> in_flight{0};

    std::mutex outbox_mutex;
    std::vector<Reply> outbox;

    std::mutex stats_mutex;
    ServerStats stats;

    Impl(Scenario s, std::uint64_t sd) : scenario(std::move(s)), seed(sd) {}

    ~Impl() {
        if (io.joinable()) {
            draining = true;
            grace_deadline_ns = 0;
            wake();
            io.join();
        }
        exec.call([this] {
            if (dispatcher) dispatcher->stop_ticks();
        });
        exec.stop();
        for (auto& [fd, c] : conns) ::close(fd);
        if (listen_fd >= 0) ::close(listen_fd);
        if (epfd >= 0) ::close(epfd);
        if (wake_fd >= 0) ::close(wake_fd);
    }

    void wake() {
        std::uint64_t one = 1;
        [[maybe_unused]] auto n = ::write(wake_fd, &one, sizeof one);
    }

    void bump(std::uint64_t ServerStats::*field) {
        std::lock_guard lk(stats_mutex);
        ++(stats.*field);
    }

    void set_events(Conn& c, bool want_write) {
        if (c.want_write == want_write) return;
        c.want_write = want_write;
        epoll_event ev{};
        ev.events = EPOLLIN | EPOLLRDHUP | (want_write ? EPOLLOUT : 0u);
        ev.data.fd = c.fd;
        ::epoll_ctl(epfd, EPOLL_CTL_MOD, c.fd, &ev);
    }

    void close_conn(int fd) {
        auto it = conns.find(fd);
        if (it == conns.end()) return;
        ::epoll_ctl(epfd, EPOLL_CTL_DEL, fd, nullptr);
        ::close(fd);
        conns.erase(it);
    }

    void accept_all() {
        for (;;) {
            int fd = ::accept4(listen_fd, nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
            if (fd < 0) {
                if (errno == EINTR) continue;
                if (errno != EAGAIN && errno != EWOULDBLOCK) bump(&ServerStats::connection_errors);
                return;
            }
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            auto c = std::make_unique<Conn>();
            c->fd = fd;
            c->id = next_conn_id++;
            epoll_event ev{};
            ev.events = EPOLLIN | EPOLLRDHUP;
            ev.data.fd = fd;
            ::epoll_ctl(epfd, EPOLL_CTL_ADD, fd, &ev);
            conns.emplace(fd, std::move(c));
            bump(&ServerStats::connections_accepted);
        }
    }

    // Returns false if the connection was closed.
    bool flush(Conn& c) {
        while (c.out_off < c.out.size()) {
            ssize_t n = ::send(c.fd, c.out.data() + c.out_off, c.out.size() - c.out_off, MSG_NOSIGNAL);
            if (n > 0) {
                c.out_off += static_cast<std::size_t>(n);
                continue;
            }
            if (n < 0 && errno == EINTR) continue;
            if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
                set_events(c, true);
                return true;
            }
            bump(&ServerStats::connection_errors);
            close_conn(c.fd);
            return false;
        }
        c.out.clear();
        c.out_off = 0;
        set_events(c, false);
        if (c.close_after_write && !c.busy) {
            close_conn(c.fd);
            return false;
        }
        return true;
    }

    void reply_now(Conn& c, int status, std::string_view body, bool keep_alive,
                   std::string_view type = "application/json") {
        c.out += format_response(status, body, keep_alive, type);
        if (!keep_alive) c.close_after_write = true;
    }

    void read_conn(Conn& c) {
        char buf[16384];
        for (;;) {
            ssize_t n = ::recv(c.fd, buf, sizeof buf, 0);
            if (n > 0) {
                c.parser.feed(std::string_view(buf, static_cast<std::size_t>(n)));
                continue;
            }
            if (n < 0 && errno == EINTR) continue;
            if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
            if (n < 0) bump(&ServerStats::connection_errors);
            // Peer closed; responses for requests still in flight are dropped.
            close_conn(c.fd);
            return;
        }
        try {
            while (auto msg = c.parser.next()) c.pending.push_back(std::move(*msg));
        } catch (const HttpError& e) {
            bump(&ServerStats::bad_requests);
            c.pending.clear();
            reply_now(c, 400, error_body(e.what()), false);
            c.busy = false;
            flush(c);
            return;
        }
        pump(c);
    }

    // Starts the next queued request on a connection, one at a time.
    void pump(Conn& c) {
        int fd = c.fd;
        while (!c.busy && !c.pending.empty()) {
            HttpMessage req = std::move(c.pending.front());
            c.pending.pop_front();
            bump(&ServerStats::requests);
            handle(c, std::move(req));
        }
        if (conns.count(fd)) flush(c);
    }

    void submit(Conn& c, Job job, bool keep_alive, bool is_get_config, bool is_post_config) {
        c.busy = true;
        ++in_flight;
        int fd = c.fd;
        std::uint64_t cid = c.id;
        exec.post([this, fd, cid, keep_alive, is_get_config, is_post_config, job = std::move(job)]() mutable {
            auto respond = [this, fd, cid, keep_alive](int status, const std::string& body) {
                {
                    std::lock_guard lk(outbox_mutex);
                    outbox.push_back({fd, cid, format_response(status, body, keep_alive), keep_alive});
                }
                wake();
            };
            try {
                dispatcher->submit(std::move(job), [=](Outcome out) {
                    Status st = out.response.status;
                    if (st == Status::Ok && is_get_config) {
                        if (out.record) respond(200, serialize_record(*out.record));
                        else respond(404, error_body("no record for key"));
                    } else if (st == Status::Ok && is_post_config && out.record) {
                        respond(201, serialize_record(*out.record));
                    } else {
                        respond(http_status_for(st), out.body);
                    }
                });
            } catch (const std::exception& e) {
                respond(500, error_body(e.what()));
            }
        });
    }

    void handle(Conn& c, HttpMessage req) {
        std::string path = req.path();
        bool ka = req.keep_alive && !draining;
        if (path == "/healthz" && req.method == "GET") return reply_now(c, 200, "ok", ka, "text/plain");
        if (path == "/info" && req.method == "GET") {
            Json info{{"mode", to_string(scenario.mode)},
                      {"site", to_string(scenario.site)},
                      {"grid", scenario.grid},
                      {"estimator", scenario.estimator}};
            return reply_now(c, 200, info.dump(), ka);
        }
        try {
            if (path == "/config" && req.method == "GET") {
                auto k = req.query("key");
                if (!k) throw std::invalid_argument("missing key parameter");
                Job job;
                job.key = parse_as<ConfigKey>(base64url_decode(*k), "key");
                job.request.kind = RequestKind::ResourceQuery;
                job.request.id = next_request_id++;
                if (auto d = req.query("deadline_ms")) {
                    double v = 0;
                    auto res = std::from_chars(d->data(), d->data() + d->size(), v);
                    if (res.ec != std::errc() || !(v > 0)) throw std::invalid_argument("bad deadline_ms");
                    job.request.deadline_ms = v;
                }
                job.user = c.id;
                return submit(c, std::move(job), ka, true, false);
            }
            if (path == "/config" && req.method == "POST") {
                StoreRecord rec = parse_record(req.body);
                Job job;
                job.key = rec.key;
                job.payload = rec.config;
                job.request.kind = RequestKind::ResourceUpdate;
                job.request.id = next_request_id++;
                if (auto d = req.query("deadline_ms")) job.request.deadline_ms = std::stod(*d);
                job.user = c.id;
                return submit(c, std::move(job), ka, false, true);
            }
            if (path == "/request" && req.method == "POST") {
                auto env = validate_request(parse_as<RequestEnvelope>(req.body, "request"));
                Job job;
                job.request = env;
                job.user = c.id;
                return submit(c, std::move(job), ka, false, false);
            }
        } catch (const ValidationError& e) {
            Json issues = Json::array();
            for (const auto& i : e.issues()) issues.push_back(Json{{"field", i.field}, {"message", i.reason}});
            bump(&ServerStats::bad_requests);
            return reply_now(c, 400, Json{{"error", "validation failed"}, {"issues", issues}}.dump(), ka);
        } catch (const std::exception& e) {
            bump(&ServerStats::bad_requests);
            return reply_now(c, 400, error_body(e.what()), ka);
        }
        if (path == "/config" || path == "/request" || path == "/healthz" || path == "/info")
            return reply_now(c, 405, error_body("method not allowed"), ka);
        reply_now(c, 404, error_body("no such endpoint"), ka);
    }

    void drain_outbox() {
        std::uint64_t v;
        [[maybe_unused]] auto n = ::read(wake_fd, &v, sizeof v);
        std::vector<Reply> batch;
        {
            std::lock_guard lk(outbox_mutex);
            batch.swap(outbox);
        }
        for (auto& r : batch) {
            --in_flight;
            auto it = conns.find(r.fd);
            if (it == conns.end() || it->second->id != r.conn_id) continue;
            Conn& c = *it->second;
            c.busy = false;
            c.out += r.bytes;
            if (!r.keep_alive) c.close_after_write = true;
            if (!flush(c)) continue;
            if (!c.close_after_write) pump(c);
        }
    }

    void loop() {
        std::vector<epoll_event> events(1024);
        bool listening = true;
        for (;;) {
            if (draining) {
                if (listening) {
                    ::epoll_ctl(epfd, EPOLL_CTL_DEL, listen_fd, nullptr);
                    ::close(listen_fd);
                    listen_fd = -1;
                    listening = false;
                }
                bool flushed = true;
                for (auto& [fd, c] : conns)
                    if (c->out_off < c->out.size()) flushed = false;
                auto now = std::chrono::steady_clock::now().time_since_epoch().count();
                if ((in_flight == 0 && flushed) || now >= grace_deadline_ns) break;
            }
            int n = ::epoll_wait(epfd, events.data(), static_cast<int>(events.size()), 50);
            if (n < 0) {
                if (errno == EINTR) continue;
                std::cerr << "epoll_wait: " << std::strerror(errno) << '\n';
                break;
            }
            for (int i = 0; i < n; ++i) {
                int fd = events[i].data.fd;
                auto ev = events[i].events;
                if (fd == wake_fd) {
                    drain_outbox();
                    continue;
                }
                if (fd == listen_fd) {
                    accept_all();
                    continue;
                }
                auto it = conns.find(fd);
                if (it == conns.end()) continue;
                Conn& c = *it->second;
                if (ev & EPOLLOUT) {
                    if (!flush(c)) continue;
                }
                if (ev & (EPOLLIN | EPOLLRDHUP | EPOLLHUP | EPOLLERR)) read_conn(c);
            }
        }
    }
};

LiveServer::LiveServer(Scenario scenario, std::uint64_t seed)
    : impl_(std::make_unique<Impl>(std::move(scenario), seed)) {}

LiveServer::~LiveServer() = default;

void LiveServer::start(const BindAddress& bind) {
    Impl& m = *impl_;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE | AI_NUMERICSERV;
    addrinfo* res = nullptr;
    std::string port = std::to_string(bind.port);
    if (int rc = ::getaddrinfo(bind.host.c_str(), port.c_str(), &hints, &res); rc != 0)
        throw BindError("cannot resolve " + bind.host + ": " + ::gai_strerror(rc));
    int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0);
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 4096) != 0) {
        std::string err = std::strerror(errno);
        ::freeaddrinfo(res);
        ::close(fd);
        throw BindError("cannot bind " + bind.host + ":" + port + ": " + err);
    }
    ::freeaddrinfo(res);
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    m.listen_fd = fd;

    if (!m.scenario.config_log.empty())
        m.store = std::make_unique<ConfigStore>(m.scenario.config_log);
    else
        m.store = std::make_unique<ConfigStore>();
    if (!m.scenario.results_log.empty()) m.results = std::make_unique<ConfigStore>(m.scenario.results_log);
    for (const auto& w : m.store->warnings()) std::cerr << "warning: " << w << '\n';

    m.exec.call([&m] {
        m.dispatcher = std::make_unique<Dispatcher>(m.scenario, m.exec, *m.store, m.results.get(), m.seed);
        m.dispatcher->start();
    });

    m.epfd = ::epoll_create1(EPOLL_CLOEXEC);
    m.wake_fd = ::eventfd(0, EFD_NONBLOCK | EFD_CLOEXEC);
    epoll_event ev{};
    ev.events = EPOLLIN;
    ev.data.fd = m.listen_fd;
    ::epoll_ctl(m.epfd, EPOLL_CTL_ADD, m.listen_fd, &ev);
    ev.data.fd = m.wake_fd;
    ::epoll_ctl(m.epfd, EPOLL_CTL_ADD, m.wake_fd, &ev);
    m.io = std::thread([&m] { m.loop(); });
}

void LiveServer::shutdown(Nanos grace) {
    Impl& m = *impl_;
    if (!m.io.joinable()) return;
    m.grace_deadline_ns = (std::chrono::steady_clock::now().time_since_epoch() + grace).count();
    m.draining = true;
    m.wake();
    m.io.join();
    m.exec.call([&m] { m.dispatcher->stop_ticks(); });
}

ServerStats LiveServer::stats() {
    Impl& m = *impl_;
    ServerStats s;
    {
        std::lock_guard lk(m.stats_mutex);
        s = m.stats;
    }
    m.exec.call([&] {
        if (!m.dispatcher) return;
        s.dispatch = m.dispatcher->counters();
        for (const auto& r : m.dispatcher->runtimes())
            s.max_in_service_excess = std::max(s.max_in_service_excess, r.max_in_service - r.concurrency);
    });
    return s;
}

void LiveServer::with_dispatcher(const std::function<void(Dispatcher&)>& fn) {
    Impl& m = *impl_;
    m.exec.call([&] { fn(*m.dispatcher); });
}

}  // namespace offload
