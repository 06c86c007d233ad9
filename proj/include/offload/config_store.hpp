#pragma once

// Append-only JSON-lines store of channel configurations with an in-memory
// latest-version index. One line per StoreRecord:
//   {"key":[...],"config":{...},"version":n,"written_ts":ns}

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "offload/codec.hpp"
#include "offload/domain.hpp"

namespace offload {

struct StoreRecord {
    ConfigKey key;
    ChannelConfig config;
    std::uint64_t version = 0;
    Nanos written_ts{0};

    bool operator==(const StoreRecord&) const = default;
};

void to_json(Json& j, const StoreRecord& v);
void from_json(const Json& j, StoreRecord& v);

std::string serialize_record(const StoreRecord& r);
// Throws ParseError on malformed input.
StoreRecord parse_record(std::string_view line);

struct StoreStats {
    std::uint64_t record_count = 0;
    std::uint64_t read_count = 0;
    std::uint64_t write_count = 0;
    std::uint64_t hit_count = 0;
    std::uint64_t miss_count = 0;
};

struct StoreOptions {
    // fsync after every append; a plain write(2) already survives a process kill.
    bool sync_each_write = false;
};

class ConfigStore {
public:
    // Memory-only store (no log file).
    ConfigStore();
    // Opens `log`, replaying every valid entry. A torn final line is dropped,
    // truncated from the file and reported through warnings().
    explicit ConfigStore(std::filesystem::path log, StoreOptions options = {});
    ~ConfigStore();

    ConfigStore(const ConfigStore&) = delete;
    ConfigStore& operator=(const ConfigStore&) = delete;

    std::optional<StoreRecord> read(const ConfigKey& key);
    // Appends before returning. Throws StorageError if the append fails; the
    // index is left untouched in that case.
    StoreRecord write(const ConfigKey& key, const ChannelConfig& config, Nanos written_ts);

    StoreStats stats() const;
    std::vector<std::string> warnings() const;
    // Latest record per key, ordered by key.
    std::vector<StoreRecord> snapshot() const;
    // Rewrites the log with only the latest record per key.
    void compact();

    const std::filesystem::path& path() const noexcept { return path_; }
    bool persistent() const noexcept { return fd_ >= 0; }

private:
    void replay();
    void append_line(const std::string& line);

    std::filesystem::path path_;
    StoreOptions options_;
    int fd_ = -1;

    mutable std::shared_mutex index_mutex_;
    std::unordered_map<ConfigKey, StoreRecord> index_;
    std::mutex commit_mutex_;

    std::atomic<std::uint64_t> writes_{0};
    std::atomic<std::uint64_t> hits_{0};
    std::atomic<std::uint64_t> misses_{0};

    mutable std::mutex warn_mutex_;
    std::vector<std::string> warnings_;
};

std::unique_ptr<ConfigStore> recover(const std::filesystem::path& log, StoreOptions options = {});

struct RetryPolicy {
    Nanos interval = std::chrono::milliseconds(100);
    int max_retries = 3;
};

// Reads until a hit or until max_retries retries are spent (at most
// max_retries + 1 reads). `wait` is called between attempts and either sleeps
// or advances a simulated clock.
std::optional<StoreRecord> read_with_retry(ConfigStore& store, const ConfigKey& key,
                                           const RetryPolicy& policy,
                                           const std::function<void(Nanos)>& wait);
std::optional<StoreRecord> read_with_retry(ConfigStore& store, const ConfigKey& key,
                                           const RetryPolicy& policy);

}  // namespace offload
