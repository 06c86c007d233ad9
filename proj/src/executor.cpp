#include "offload/executor.hpp"

#include <algorithm>
#include <future>
#include <iostream>
#include <ostream>
#include <stdexcept>

namespace offload {

namespace {

// Min-heap on (time, seq) via std heap algorithms (which build max-heaps).
struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
        if (a.time != b.time) return a.time > b.time;
        return a.seq > b.seq;
    }
};

SimEvent pop_heap_event(std::vector<SimEvent>& heap) {
    std::pop_heap(heap.begin(), heap.end(), Later{});
    SimEvent ev = std::move(heap.back());
    heap.pop_back();
    return ev;
}

}  // namespace

void SimExecutor::at(Nanos when, const char* tag, Task task) {
    if (when < now_) when = now_;
    heap_.push_back(SimEvent{when, next_seq_++, tag, std::move(task)});
    std::push_heap(heap_.begin(), heap_.end(), Later{});
}

bool SimExecutor::step() {
    if (heap_.empty()) return false;
    SimEvent ev = pop_heap_event(heap_);
    if (ev.time < now_) throw std::logic_error("simulation clock moved backwards");
    now_ = ev.time;
    ++processed_;
    if (trace_) *trace_ << ev.time.count() << ' ' << ev.seq << ' ' << ev.tag << '\n';
    ev.task();
    return true;
}

void SimExecutor::run_until(Nanos limit) {
    while (!heap_.empty() && heap_.front().time <= limit) step();
    if (limit > now_) now_ = limit;
}

void SimExecutor::run() {
    while (step()) {
    }
}

RealtimeExecutor::RealtimeExecutor() : epoch_(std::chrono::steady_clock::now()) {
    thread_ = std::thread([this] { loop(); });
}

RealtimeExecutor::~RealtimeExecutor() { stop(); }

Nanos RealtimeExecutor::now() const {
    return std::chrono::duration_cast<Nanos>(std::chrono::steady_clock::now() - epoch_);
}

void RealtimeExecutor::at(Nanos when, const char* tag, Task task) {
    {
        std::lock_guard lk(mutex_);
        heap_.push_back(SimEvent{when, next_seq_++, tag, std::move(task)});
        std::push_heap(heap_.begin(), heap_.end(), Later{});
    }
    cv_.notify_one();
}

void RealtimeExecutor::call(const Task& task) {
    if (std::this_thread::get_id() == thread_.get_id()) {
        task();
        return;
    }
    std::promise<void> done;
    auto fut = done.get_future();
    post([&] {
        try {
            task();
            done.set_value();
        } catch (...) {
            done.set_exception(std::current_exception());
        }
    });
    fut.get();
}

void RealtimeExecutor::stop() {
    {
        std::lock_guard lk(mutex_);
        if (stopping_ && !thread_.joinable()) return;
        stopping_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
}

void RealtimeExecutor::loop() {
    std::unique_lock lk(mutex_);
    while (!stopping_) {
        if (heap_.empty()) {
            cv_.wait(lk);
            continue;
        }
        Nanos due = heap_.front().time;
        if (due > now()) {
            cv_.wait_until(lk, epoch_ + due);
            continue;
        }
        SimEvent ev = pop_heap_event(heap_);
        lk.unlock();
        try {
            ev.task();
        } catch (const std::exception& e) {
            std::cerr << "error: task '" << ev.tag << "' failed: " << e.what() << '\n';
        }
        lk.lock();
    }
}

}  // namespace offload
