#include "offload/config_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "offload/errors.hpp"

namespace offload {

void to_json(Json& j, const StoreRecord& v) {
    j = Json{{"key", v.key},
             {"config", v.config},
             {"version", v.version},
             {"written_ts", v.written_ts.count()}};
}

void from_json(const Json& j, StoreRecord& v) {
    j.at("key").get_to(v.key);
    j.at("config").get_to(v.config);
    j.at("version").get_to(v.version);
    v.written_ts = Nanos(j.at("written_ts").get<std::int64_t>());
}

std::string serialize_record(const StoreRecord& r) { return Json(r).dump(); }

StoreRecord parse_record(std::string_view line) { return parse_as<StoreRecord>(line, "record"); }

namespace {

std::string errno_text(const std::string& what, const std::filesystem::path& p) {
    return what + " " + p.string() + ": " + std::strerror(errno);
}

}  // namespace

ConfigStore::ConfigStore() = default;

ConfigStore::ConfigStore(std::filesystem::path log, StoreOptions options)
    : path_(std::move(log)), options_(options) {
    replay();
    fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw StorageError(errno_text("cannot open log", path_));
}

ConfigStore::~ConfigStore() {
    if (fd_ >= 0) ::close(fd_);
}

void ConfigStore::replay() {
    std::error_code ec;
    if (!std::filesystem::exists(path_, ec)) return;
    if (std::filesystem::is_directory(path_, ec))
        throw StorageError("log path is a directory: " + path_.string());

    std::ifstream in(path_, std::ios::binary);
    if (!in) throw StorageError(errno_text("cannot read log", path_));
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw StorageError(errno_text("cannot read log", path_));

    std::size_t pos = 0;
    std::size_t line_no = 0;
    std::size_t valid_end = 0;
    while (pos < data.size()) {
        ++line_no;
        std::size_t nl = data.find('\n', pos);
        if (nl == std::string::npos) {
            // Unterminated tail: the append that produced it never returned.
            std::lock_guard lk(warn_mutex_);
            warnings_.push_back(path_.string() + ":" + std::to_string(line_no) +
                                ": discarded torn trailing entry (" +
                                std::to_string(data.size() - pos) + " bytes)");
            break;
        }
        std::string_view line(data.data() + pos, nl - pos);
        if (!line.empty()) {
            StoreRecord rec;
            try {
                rec = parse_record(line);
            } catch (const ParseError& e) {
                throw StorageError(path_.string() + ":" + std::to_string(line_no) +
                                   ": corrupted entry: " + e.what());
            }
            auto [it, inserted] = index_.try_emplace(rec.key, rec);
            if (!inserted && rec.version > it->second.version) it->second = rec;
        }
        pos = nl + 1;
        valid_end = pos;
    }

    if (valid_end < data.size()) {
        std::filesystem::resize_file(path_, valid_end, ec);
        if (ec) throw StorageError("cannot truncate torn tail of " + path_.string() + ": " +
                                   ec.message());
    }
    for (const auto& w : warnings_) std::cerr << "warning: " << w << '\n';
}

void ConfigStore::append_line(const std::string& line) {
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
        ssize_t n = ::write(fd_, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw StorageError(errno_text("append failed on", path_));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    if (options_.sync_each_write && ::fsync(fd_) != 0)
        throw StorageError(errno_text("fsync failed on", path_));
}

std::optional<StoreRecord> ConfigStore::read(const ConfigKey& key) {
    std::shared_lock lk(index_mutex_);
    auto it = index_.find(key);
    if (it == index_.end()) {
        misses_.fetch_add(1, std::memory_order_relaxed);
        return std::nullopt;
    }
    hits_.fetch_add(1, std::memory_order_relaxed);
    return it->second;
}

StoreRecord ConfigStore::write(const ConfigKey& key, const ChannelConfig& config,
                               Nanos written_ts) {
    std::lock_guard commit(commit_mutex_);
    StoreRecord rec{key, config, 1, written_ts};
    {
        std::shared_lock lk(index_mutex_);
        auto it = index_.find(key);
        if (it != index_.end()) rec.version = it->second.version + 1;
    }
    if (fd_ >= 0) {
        std::string line = serialize_record(rec);
        line.push_back('\n');
        append_line(line);
    }
    {
        std::unique_lock lk(index_mutex_);
        index_.insert_or_assign(key, rec);
    }
    writes_.fetch_add(1, std::memory_order_relaxed);
    return rec;
}

StoreStats ConfigStore::stats() const {
    StoreStats s;
    {
        std::shared_lock lk(index_mutex_);
        s.record_count = index_.size();
    }
    s.write_count = writes_.load();
    s.hit_count = hits_.load();
    s.miss_count = misses_.load();
    s.read_count = s.hit_count + s.miss_count;
    return s;
}

std::vector<std::string> ConfigStore::warnings() const {
    std::lock_guard lk(warn_mutex_);
    return warnings_;
}

std::vector<StoreRecord> ConfigStore::snapshot() const {
    std::vector<StoreRecord> out;
    {
        std::shared_lock lk(index_mutex_);
        out.reserve(index_.size());
        for (const auto& [k, r] : index_) out.push_back(r);
    }
    std::sort(out.begin(), out.end(),
              [](const StoreRecord& a, const StoreRecord& b) { return a.key < b.key; });
    return out;
}

void ConfigStore::compact() {
    if (fd_ < 0) return;
    std::lock_guard commit(commit_mutex_);
    auto records = snapshot();
    auto tmp = path_;
    tmp += ".compact";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StorageError("cannot create " + tmp.string());
        for (const auto& r : records) out << serialize_record(r) << '\n';
        out.flush();
        if (!out) throw StorageError("cannot write " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path_, ec);
    if (ec) throw StorageError("cannot replace " + path_.string() + ": " + ec.message());
    ::close(fd_);
    fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw StorageError(errno_text("cannot reopen log", path_));
}

std::unique_ptr<ConfigStore> recover(const std::filesystem::path& log, StoreOptions options) {
    return std::make_unique<ConfigStore>(log, options);
}

std::optional<StoreRecord> read_with_retry(ConfigStore& store, const ConfigKey& key,
                                           const RetryPolicy& policy,
                                           const std::function<void(Nanos)>& wait) {
    if (policy.interval.count() <= 0) throw std::invalid_argument("retry interval must be > 0");
    for (int attempt = 0;; ++attempt) {
        if (auto rec = store.read(key)) return rec;
        if (attempt >= policy.max_retries) return std::nullopt;
        wait(policy.interval);
    }
}

std::optional<StoreRecord> read_with_retry(ConfigStore& store, const ConfigKey& key,
                                           const RetryPolicy& policy) {
    return read_with_retry(store, key, policy, [](Nanos d) { std::this_thread::sleep_for(d); });
}

}  // namespace offload
