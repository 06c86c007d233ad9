#pragma once

// Live mode: one process serving the HTTP interface for a scenario.
//   GET  /healthz                 -> 200 "ok"
//   GET  /info                    -> 200 {"mode","site","grid","estimator"}
//   GET  /config?key=<b64url>     -> 200 StoreRecord | 404
//   POST /config   (StoreRecord)  -> 201 StoreRecord
//   POST /request  (RequestEnvelope) -> 200 ResponseEnvelope
// Non-Ok outcomes map Timeout->504, Rejected->429, Failed->500; malformed
// input gets 400.

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>

#include "offload/dispatcher.hpp"
#include "offload/scenario.hpp"

namespace offload {

struct BindAddress {
    std::string host = "127.0.0.1";
    int port = 8080;
};

// Parses "host:port"; throws std::invalid_argument.
BindAddress parse_bind(std::string_view text);

int http_status_for(Status s);

struct ServerStats {
    std::uint64_t connections_accepted = 0;
    std::uint64_t requests = 0;
    std::uint64_t bad_requests = 0;
    std::uint64_t connection_errors = 0;
    DispatchCounters dispatch;
    int max_in_service_excess = 0;
};

class LiveServer {
public:
    LiveServer(Scenario scenario, std::uint64_t seed);
    ~LiveServer();

    LiveServer(const LiveServer&) = delete;
    LiveServer& operator=(const LiveServer&) = delete;

    // Binds and starts serving. Port 0 picks an ephemeral port. Throws BindError.
    void start(const BindAddress& bind);
    int port() const { return port_; }

    // Stops accepting, lets in-flight requests finish for up to `grace`,
    // then closes every connection.
    void shutdown(Nanos grace);

    ServerStats stats();
    // Runs `fn` on the dispatcher's executor thread.
    void with_dispatcher(const std::function<void(Dispatcher&)>& fn);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

}  // namespace offload
