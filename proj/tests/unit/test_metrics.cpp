#include <doctest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "../support/oracles.hpp"
#include "offload/errors.hpp"
#include "offload/metrics.hpp"

using namespace offload;
namespace pt = boost::property_tree;

namespace {

MetricsRecord record_of(std::vector<double> samples, double window = 10.0) {
    MetricsRecord r;
    r.mode = "swarm";
    r.site = "edge";
    r.op = "read";
    r.users = 10;
    r.latencies_ms = std::move(samples);
    r.counts.ok = r.latencies_ms.size();
    r.window_s = window;
    return r;
}

SummaryRow row(int users, double mean, double rps) {
    SummaryRow r;
    r.mode = "swarm";
    r.site = "edge";
    r.op = "read";
    r.users = users;
    r.ok = 100;
    r.mean_ms = r.p50_ms = r.p95_ms = r.p99_ms = mean;
    r.rps = rps;
    r.Bps = rps * 200;
    return r;
}

void collect_tags(const pt::ptree& t, std::set<std::string>& out) {
    for (const auto& [name, child] : t) {
        if (name == "<xmlattr>" || name == "<xmlcomment>") continue;
        out.insert(name);
        collect_tags(child, out);
    }
}

}  // namespace

TEST_CASE("aggregate small samples") {
    auto r = aggregate(record_of({10, 20, 30}));
    CHECK(r.mean_ms == 20.0);
    CHECK(r.p50_ms == 20.0);
    auto one = aggregate(record_of({7}));
    CHECK(one.mean_ms == 7.0);
    CHECK(one.p50_ms == 7.0);
    CHECK(one.p99_ms == 7.0);
}

TEST_CASE("empty record aggregates to NaN with an error flag") {
    auto rec = record_of({});
    rec.counts.failed = 3;
    auto r = aggregate(rec);
    CHECK(std::isnan(r.mean_ms));
    CHECK(std::isnan(r.p99_ms));
    CHECK(r.err == 3);
    CHECK(r.err_rate() == 1.0);
}

TEST_CASE("percentiles agree with a sort-based oracle") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    std::vector<double> v(1000);
    for (auto& x : v) x = u(rng);
    auto r = aggregate(record_of(v));
    CHECK(r.p95_ms >= 90.0);
    CHECK(r.p95_ms <= 100.0);
    CHECK(r.p50_ms == oracle::percentile(v, 50));
    CHECK(r.p95_ms == oracle::percentile(v, 95));
    CHECK(r.p99_ms == oracle::percentile(v, 99));
}

TEST_CASE("percentile sandwich") {
    std::mt19937_64 rng(13);
    std::exponential_distribution<double> e(0.1);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> v(1 + rng() % 300);
        for (auto& x : v) x = e(rng);
        auto r = aggregate(record_of(v));
        CHECK(r.p50_ms <= r.p95_ms);
        CHECK(r.p95_ms <= r.p99_ms);
        CHECK(r.p99_ms <= *std::max_element(v.begin(), v.end()));
    }
}

TEST_CASE("throughput") {
    MetricsRecord r = record_of(std::vector<double>(500, 1.0));
    r.bytes_total = 1000000;
    auto t = throughput(r);
    CHECK(t.rps == 50.0);
    CHECK(t.Bps == 100000.0);
    CHECK(t.rps * r.window_s == static_cast<double>(r.counts.ok));

    MetricsRecord sized = record_of(std::vector<double>(100, 1.0), 4.0);
    sized.bytes_total = 100 * 200;
    CHECK(throughput(sized).Bps == 20000.0 / 4.0);

    r.window_s = 0;
    CHECK_THROWS_AS(throughput(r), std::invalid_argument);
}

TEST_CASE("knee detection") {
    std::vector<SummaryRow> flat{row(50, 10, 1), row(100, 10, 2), row(150, 10.5, 3)};
    CHECK_FALSE(knee_detect(flat, 3.0));
    std::vector<SummaryRow> rising{row(1, 10, 1), row(2, 10, 1), row(3, 10, 1), row(4, 50, 1), row(5, 90, 1)};
    CHECK(knee_detect(rising, 3.0) == 4);
    rising.resize(2);
    CHECK_FALSE(knee_detect(rising, 3.0));
}

TEST_CASE("finite population oracle") {
    CHECK(finite_population_oracle(1, 1, 10.0, 0.0) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(finite_population_oracle(5000, 4, 10.0, 0.0) == doctest::Approx(400.0).epsilon(1e-9));
    CHECK(finite_population_oracle(100000, 4, 10.0, 50.0) == doctest::Approx(400.0).epsilon(1e-6));
    // One user alternates think and service.
    CHECK(finite_population_oracle(1, 3, 10.0, 30.0) == doctest::Approx(25.0).epsilon(1e-12));
    double x = finite_population_oracle(8, 2, 10.0, 10.0);
    double sim = oracle::repairman_sim(8, 2, 10.0, 10.0, 10000000, 99);
    CHECK(sim == doctest::Approx(x).epsilon(0.01));
    CHECK(x < 200.0);
}

TEST_CASE("oracle is monotone in users and servers") {
    for (int c = 1; c <= 8; ++c) {
        double prev = 0;
        for (int n = 1; n <= 200; ++n) {
            double x = finite_population_oracle(n, c, 10.0, 5.0);
            CHECK(x >= prev * (1 - 1e-12));
            CHECK(x <= c * 100.0 + 1e-9);
            prev = x;
        }
    }
}

TEST_CASE("CSV round trip") {
    std::vector<SummaryRow> rows{row(50, 12.25, 400.1), row(100, 0.1 + 0.2, 1.0 / 3.0)};
    rows[1].err = 4;
    std::string text = std::string(kCsvHeader) + "\n" + csv_row(rows[0]) + "\n" + csv_row(rows[1]) + "\n";
    auto back = parse_csv(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0] == rows[0]);
    CHECK(back[1] == rows[1]);
    CHECK(back[1].mean_ms == 0.1 + 0.2);

    auto dir = std::filesystem::temp_directory_path() / ("offload-metrics-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    emit_csv(rows, dir / "r.csv");
    CHECK(read_csv(dir / "r.csv") == rows);

    SummaryRow nan_row = aggregate(record_of({}));
    nan_row.users = 7;
    emit_csv({nan_row}, dir / "nan.csv");
    auto nb = read_csv(dir / "nan.csv");
    CHECK(nb.at(0) == nan_row);
    CHECK(std::isnan(nb[0].p50_ms));
}

TEST_CASE("CSV writer appends incrementally") {
    auto dir = std::filesystem::temp_directory_path() / ("offload-metrics-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    auto path = dir / "inc.csv";
    CsvWriter w(path);
    w.append(row(50, 1, 1));
    CHECK(read_csv(path).size() == 1);
    w.append(row(100, 2, 2));
    CHECK(read_csv(path).size() == 2);
}

TEST_CASE("CSV schema mismatch") {
    CHECK_THROWS_AS(parse_csv("mode,site,op,users\nx,y,z,1\n"), SchemaMismatch);
    CHECK_THROWS_AS(parse_csv(std::string(kCsvHeader) + "\nswarm,edge,read,notanumber,1,0,1,1,1,1,1,1\n"),
                    SchemaMismatch);
    CHECK_THROWS_AS(parse_csv(std::string(kCsvHeader) + "\nswarm,edge,read,5\n"), SchemaMismatch);
}

TEST_CASE("SVG is well-formed and uses only the allowed elements") {
    std::vector<Series> series{{"swarm/edge/read", {row(50, 10, 100), row(100, 12, 180), row(150, 40, 190)}},
                               {"mono/<cloud>&read", {row(50, 20, 90), row(100, 60, 95)}},
                               {"empty", {}}};
    auto svg = render_svg(series, "Read & \"compare\"");
    std::istringstream in(svg);
    pt::ptree tree;
    REQUIRE_NOTHROW(pt::read_xml(in, tree));
    std::set<std::string> tags;
    collect_tags(tree, tags);
    CHECK(tags.count("svg") == 1);
    const std::set<std::string> allowed{"svg", "path", "line", "text", "rect"};
    for (const auto& t : tags) CHECK_MESSAGE(allowed.count(t) == 1, t);
    CHECK(tree.get<std::string>("svg.<xmlattr>.xmlns") == "http://www.w3.org/2000/svg");

    // Curves for NaN-only rows must not produce invalid path data.
    auto nan_row = row(50, std::nan(""), 0);
    auto svg2 = render_svg({{"nan", {nan_row, row(100, 5, 5)}}}, "t");
    std::istringstream in2(svg2);
    CHECK_NOTHROW(pt::read_xml(in2, tree));
    CHECK(svg2.find("NaN") == std::string::npos);
}

TEST_CASE("SVG path pattern") {
    auto p = svg_path_for("out", row(50, 1, 1));
    CHECK(p == std::filesystem::path("out") / "swarm_edge_read.svg");
}

TEST_CASE("number formatting is shortest round-trip") {
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(400) == "400");
    CHECK(format_number(std::nan("")) == "nan");
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
        double v = std::ldexp(static_cast<double>(rng() >> 11), -static_cast<int>(rng() % 80));
        CHECK(std::stod(format_number(v)) == v);
    }
}
