#pragma once

// Timeline abstraction shared by the discrete-event simulator and the live
// runtime. Tasks scheduled on an executor run one at a time in (time,
// sequence) order, so code driven by an executor needs no locking.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <thread>
#include <vector>

#include "offload/domain.hpp"

namespace offload {

using Task = std::function<void()>;

class Executor {
public:
    virtual ~Executor() = default;
    virtual Nanos now() const = 0;
    // `tag` must be a string literal; it names the event in traces.
    virtual void at(Nanos when, const char* tag, Task task) = 0;
    void after(Nanos delay, const char* tag, Task task) { at(now() + delay, tag, std::move(task)); }
};

struct SimEvent {
    Nanos time{0};
    std::uint64_t seq = 0;
    const char* tag = "";
    Task task;
};

// Virtual clock; events pop in (time, sequence) order. Events scheduled in
// the past run at the current time.
class SimExecutor final : public Executor {
public:
    Nanos now() const override { return now_; }
    void at(Nanos when, const char* tag, Task task) override;

    // Runs every event with time <= limit, then advances the clock to limit.
    void run_until(Nanos limit);
    // Runs until no events remain.
    void run();
    bool step();

    std::size_t pending() const { return heap_.size(); }
    std::uint64_t processed() const { return processed_; }
    // Writes "time_ns seq tag" per processed event.
    void trace_to(std::ostream* out) { trace_ = out; }

private:
    std::vector<SimEvent> heap_;
    Nanos now_{0};
    std::uint64_t next_seq_ = 0;
    std::uint64_t processed_ = 0;
    std::ostream* trace_ = nullptr;
};

// Wall-clock timeline served by one background thread. at() and post() are
// safe from any thread.
class RealtimeExecutor final : public Executor {
public:
    RealtimeExecutor();
    ~RealtimeExecutor() override;

    RealtimeExecutor(const RealtimeExecutor&) = delete;
    RealtimeExecutor& operator=(const RealtimeExecutor&) = delete;

    Nanos now() const override;
    void at(Nanos when, const char* tag, Task task) override;
    void post(Task task) { at(now(), "post", std::move(task)); }
    // Runs `task` on the loop thread and waits for it.
    void call(const Task& task);
    void stop();

private:
    void loop();

    std::chrono::steady_clock::time_point epoch_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::vector<SimEvent> heap_;
    std::uint64_t next_seq_ = 0;
    bool stopping_ = false;
    std::thread thread_;
};

}  // namespace offload
