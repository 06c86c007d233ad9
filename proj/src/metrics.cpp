#include "offload/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "offload/errors.hpp"

namespace offload {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

double SummaryRow::err_rate() const {
    std::uint64_t n = ok + err;
    return n == 0 ? 0.0 : static_cast<double>(err) / static_cast<double>(n);
}

bool SummaryRow::operator==(const SummaryRow& o) const {
    return mode == o.mode && site == o.site && op == o.op && users == o.users && ok == o.ok && err == o.err &&
           same(mean_ms, o.mean_ms) && same(p50_ms, o.p50_ms) && same(p95_ms, o.p95_ms) &&
           same(p99_ms, o.p99_ms) && same(rps, o.rps) && same(Bps, o.Bps);
}

double nearest_rank(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return kNaN;
    if (p <= 0) return sorted.front();
    auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

Throughput throughput(const MetricsRecord& r) {
    if (!(r.window_s > 0)) throw std::invalid_argument("measure window must be > 0");
    return {static_cast<double>(r.counts.ok) / r.window_s, static_cast<double>(r.bytes_total) / r.window_s};
}

SummaryRow aggregate(const MetricsRecord& r) {
    SummaryRow row;
    row.mode = r.mode;
    row.site = r.site;
    row.op = r.op;
    row.users = r.users;
    row.ok = r.counts.ok;
    row.err = r.counts.errors();
    if (r.latencies_ms.empty()) {
        row.mean_ms = row.p50_ms = row.p95_ms = row.p99_ms = kNaN;
    } else {
        std::vector<double> s = r.latencies_ms;
        std::sort(s.begin(), s.end());
        // Accumulate in sorted order so the mean does not depend on arrival order.
        row.mean_ms = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
        row.p50_ms = nearest_rank(s, 50);
        row.p95_ms = nearest_rank(s, 95);
        row.p99_ms = nearest_rank(s, 99);
    }
    if (r.window_s > 0) {
        auto t = throughput(r);
        row.rps = t.rps;
        row.Bps = t.Bps;
    } else {
        row.rps = row.Bps = kNaN;
    }
    return row;
}

std::optional<int> knee_detect(const std::vector<SummaryRow>& rows, double alpha) {
    if (rows.size() < 3) return std::nullopt;
    double baseline = rows.front().mean_ms;
    if (!std::isfinite(baseline)) return std::nullopt;
    for (const auto& r : rows)
        if (r.mean_ms > alpha * baseline) return r.users;
    return std::nullopt;
}

double finite_population_oracle(int n, int c, double service_ms, double think_ms) {
    if (n < 1 || c < 1) throw std::invalid_argument("oracle needs n >= 1 and c >= 1");
    if (!(service_ms > 0) || !(think_ms >= 0)) throw std::invalid_argument("oracle needs service > 0, think >= 0");
    if (think_ms == 0) return std::min(n, c) * 1000.0 / service_ms;
    // log p_k relative to p_0; birth (n-k+1)/Z, death min(k,c)/S.
    std::vector<double> logp(static_cast<std::size_t>(n) + 1, 0.0);
    for (int k = 1; k <= n; ++k)
        logp[k] = logp[k - 1] + std::log(static_cast<double>(n - k + 1) / think_ms) -
                  std::log(static_cast<double>(std::min(k, c)) / service_ms);
    double mx = *std::max_element(logp.begin(), logp.end());
    double norm = 0.0, busy = 0.0;
    for (int k = 0; k <= n; ++k) {
        double w = std::exp(logp[k] - mx);
        norm += w;
        busy += w * std::min(k, c);
    }
    return busy / norm * 1000.0 / service_ms;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string csv_row(const SummaryRow& r) {
    std::string s;
    s += r.mode + ',' + r.site + ',' + r.op + ',' + std::to_string(r.users) + ',' + std::to_string(r.ok) + ',' +
         std::to_string(r.err);
    for (double v : {r.mean_ms, r.p50_ms, r.p95_ms, r.p99_ms, r.rps, r.Bps}) s += ',' + format_number(v);
    return s;
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <typename T>
T parse_field(std::string_view f, const std::string& origin, std::size_t line, const char* name) {
    T v{};
    auto res = std::from_chars(f.data(), f.data() + f.size(), v);
    if (res.ec != std::errc() || res.ptr != f.data() + f.size())
        throw SchemaMismatch(origin + ":" + std::to_string(line) + ": bad " + name + " '" + std::string(f) + "'");
    return v;
}

}  // namespace

std::vector<SummaryRow> parse_csv(std::string_view text, const std::string& origin) {
    std::vector<SummaryRow> rows;
    std::size_t line_no = 0;
    bool header = false;
    while (!text.empty()) {
        auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (!header) {
            if (line != kCsvHeader)
                throw SchemaMismatch(origin + ": header '" + std::string(line) + "' does not match '" +
                                     std::string(kCsvHeader) + "'");
            header = true;
            continue;
        }
        auto f = split(line, ',');
        if (f.size() != 12)
            throw SchemaMismatch(origin + ":" + std::to_string(line_no) + ": expected 12 fields, got " +
                                 std::to_string(f.size()));
        SummaryRow r;
        r.mode = f[0];
        r.site = f[1];
        r.op = f[2];
        r.users = parse_field<int>(f[3], origin, line_no, "users");
        r.ok = parse_field<std::uint64_t>(f[4], origin, line_no, "ok");
        r.err = parse_field<std::uint64_t>(f[5], origin, line_no, "err");
        double* dst[] = {&r.mean_ms, &r.p50_ms, &r.p95_ms, &r.p99_ms, &r.rps, &r.Bps};
        const char* names[] = {"mean_ms", "p50_ms", "p95_ms", "p99_ms", "rps", "Bps"};
        for (int i = 0; i < 6; ++i) *dst[i] = parse_field<double>(f[6 + i], origin, line_no, names[i]);
        rows.push_back(std::move(r));
    }
    if (!header) throw SchemaMismatch(origin + ": missing header");
    return rows;
}

std::vector<SummaryRow> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("write failed for " + path.string());
}

void emit_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path) {
    std::string text(kCsvHeader);
    text += '\n';
    for (const auto& r : rows) text += csv_row(r) + '\n';
    write_text(path, text);
}

CsvWriter::CsvWriter(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << kCsvHeader << '\n' << std::flush;
}

void CsvWriter::append(const SummaryRow& row) {
    out_ << csv_row(row) << '\n' << std::flush;
    if (!out_) throw std::runtime_error("csv append failed");
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"};

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fixed(double v, int digits = 1) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(digits);
    ss << v;
    return ss.str();
}

// "Nice" upper bound for an axis.
double nice_max(double v) {
    if (!(v > 0) || !std::isfinite(v)) return 1.0;
    double mag = std::pow(10.0, std::floor(std::log10(v)));
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
        if (v <= m * mag) return m * mag;
    return 10 * mag;
}

struct Panel {
    double x, y, w, h;
    std::string ylabel;
    double SummaryRow::*field;
};

void draw_panel(std::ostringstream& svg, const Panel& p, const std::vector<Series>& series, double xmax) {
    double ymax = 0;
    for (const auto& s : series)
        for (const auto& r : s.rows)
            if (std::isfinite(r.*p.field)) ymax = std::max(ymax, r.*p.field);
    ymax = nice_max(ymax * 1.05);
    auto px = [&](double u) { return p.x + p.w * u / xmax; };
    auto py = [&](double v) { return p.y + p.h - p.h * v / ymax; };

    svg << "<rect x=\"" << p.x << "\" y=\"" << p.y << "\" width=\"" << p.w << "\" height=\"" << p.h
        << "\" fill=\"#fafafa\" stroke=\"#999\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        double xv = xmax * i / 5, yv = ymax * i / 5;
        svg << "<line x1=\"" << fixed(px(xv)) << "\" y1=\"" << p.y + p.h << "\" x2=\"" << fixed(px(xv))
            << "\" y2=\"" << p.y + p.h + 5 << "\" stroke=\"#333\"/>\n";
        svg << "<text x=\"" << fixed(px(xv)) << "\" y=\"" << p.y + p.h + 18
            << "\" font-size=\"11\" text-anchor=\"middle\">" << fixed(xv, 0) << "</text>\n";
        svg << "<line x1=\"" << p.x - 5 << "\" y1=\"" << fixed(py(yv)) << "\" x2=\"" << p.x + p.w << "\" y2=\""
            << fixed(py(yv)) << "\" stroke=\"#ddd\"/>\n";
        svg << "<text x=\"" << p.x - 8 << "\" y=\"" << fixed(py(yv) + 4)
            << "\" font-size=\"11\" text-anchor=\"end\">" << format_number(std::round(yv * 100) / 100)
            << "</text>\n";
    }
    svg << "<text x=\"" << p.x + p.w / 2 << "\" y=\"" << p.y + p.h + 36
        << "\" font-size=\"12\" text-anchor=\"middle\">concurrent users</text>\n";
    svg << "<text x=\"" << p.x << "\" y=\"" << p.y - 8 << "\" font-size=\"12\">" << escape(p.ylabel)
        << "</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        std::string d;
        for (const auto& r : series[i].rows) {
            double v = r.*p.field;
            if (!std::isfinite(v)) continue;
            d += (d.empty() ? "M" : " L") + fixed(px(r.users)) + " " + fixed(py(v));
        }
        if (d.empty()) continue;
        svg << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << kPalette[i % 10]
            << "\" stroke-width=\"2\"/>\n";
    }
}

}  // namespace

std::string render_svg(const std::vector<Series>& series, const std::string& title) {
    const double width = 1000, height = 470;
    double xmax = 0;
    for (const auto& s : series)
        for (const auto& r : s.rows) xmax = std::max(xmax, static_cast<double>(r.users));
    xmax = nice_max(xmax);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">" << escape(title)
        << "</text>\n";
    draw_panel(svg, {70, 60, 380, 300, "mean response time (ms)", &SummaryRow::mean_ms}, series, xmax);
    draw_panel(svg, {570, 60, 380, 300, "throughput (req/s)", &SummaryRow::rps}, series, xmax);
    for (std::size_t i = 0; i < series.size(); ++i) {
        double y = 420 + 16 * static_cast<double>(i % 3);
        double x = 70 + 300 * static_cast<double>(i / 3);
        svg << "<line x1=\"" << x << "\" y1=\"" << y - 4 << "\" x2=\"" << x + 24 << "\" y2=\"" << y - 4
            << "\" stroke=\"" << kPalette[i % 10] << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << x + 30 << "\" y=\"" << y << "\" font-size=\"12\">" << escape(series[i].label)
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::filesystem::path svg_path_for(const std::filesystem::path& out_dir, const SummaryRow& row) {
    return out_dir / (row.mode + "_" + row.site + "_" + row.op + ".svg");
}

void emit_svg(const std::vector<SummaryRow>& rows, const std::filesystem::path& path) {
    if (rows.empty()) throw std::invalid_argument("cannot plot an empty report");
    const auto& r = rows.front();
    std::string label = r.mode + " " + r.site + " " + r.op;
    write_text(path, render_svg({Series{label, rows}}, label));
}

}  // namespace offload
