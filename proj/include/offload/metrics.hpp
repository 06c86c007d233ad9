#pragma once

// Response time, throughput and scalability measures, the finite-population
// queueing oracle, and CSV / SVG reports.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace offload {

struct StatusCounts {
    std::uint64_t ok = 0;
    std::uint64_t timeout = 0;
    std::uint64_t rejected = 0;
    std::uint64_t failed = 0;

    std::uint64_t errors() const { return timeout + rejected + failed; }
    std::uint64_t total() const { return ok + errors(); }
};

struct MetricsRecord {
    std::string mode;
    std::string site;
    std::string op;
    int users = 0;
    // Round-trip latency of every Ok response in the window.
    std::vector<double> latencies_ms;
    StatusCounts counts;
    std::uint64_t bytes_total = 0;
    double window_s = 0.0;
    // Set when the level aborted early (unreachable target).
    bool partial = false;
    // Requests issued during the window, and the time-average of requests in flight.
    std::uint64_t submitted = 0;
    double mean_in_flight = 0.0;
};

struct SummaryRow {
    std::string mode;
    std::string site;
    std::string op;
    int users = 0;
    std::uint64_t ok = 0;
    std::uint64_t err = 0;
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    double p99_ms = 0.0;
    double rps = 0.0;
    double Bps = 0.0;

    double err_rate() const;
    bool operator==(const SummaryRow&) const;
};

struct SweepReport {
    std::vector<SummaryRow> rows;
    std::optional<int> knee_users;
};

// Nearest-rank percentile of an ascending sample: the ceil(p/100 * n)-th value.
double nearest_rank(const std::vector<double>& sorted, double p);

// Latency fields are NaN when the record holds no samples.
SummaryRow aggregate(const MetricsRecord& record);

struct Throughput {
    double rps = 0.0;
    double Bps = 0.0;
};

// Throws std::invalid_argument unless window_s > 0.
Throughput throughput(const MetricsRecord& record);

// Smallest level whose mean latency exceeds alpha times the first level's.
// Absent for fewer than three levels or when no level exceeds.
std::optional<int> knee_detect(const std::vector<SummaryRow>& rows, double alpha = 3.0);

// Closed machine-repairman model: n users alternate exponential think time
// (mean think_ms) with a c-server FCFS station (exponential service, mean
// service_ms). Returns the steady-state throughput in requests per second.
double finite_population_oracle(int n_users, int c_servers, double mean_service_ms, double think_ms);

inline constexpr std::string_view kCsvHeader = "mode,site,op,users,ok,err,mean_ms,p50_ms,p95_ms,p99_ms,rps,Bps";

// Shortest round-trippable decimal form.
std::string format_number(double v);
std::string csv_row(const SummaryRow& row);
// Throws SchemaMismatch when the header differs or a row is malformed.
std::vector<SummaryRow> parse_csv(std::string_view text, const std::string& origin = "csv");
std::vector<SummaryRow> read_csv(const std::filesystem::path& path);
void emit_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);

// Appends rows as they are produced so an interrupted sweep leaves a usable file.
class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path);
    void append(const SummaryRow& row);

private:
    std::ofstream out_;
};

struct Series {
    std::string label;
    std::vector<SummaryRow> rows;
};

// Two panels (mean latency vs users, throughput vs users), one curve per series.
std::string render_svg(const std::vector<Series>& series, const std::string& title);
std::filesystem::path svg_path_for(const std::filesystem::path& out_dir, const SummaryRow& row);
void emit_svg(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace offload
