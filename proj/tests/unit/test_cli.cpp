#include <doctest.h>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "offload/http.hpp"
#include "offload/metrics.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kBin = OFFLOAD_BIN;
const std::string kConfigs = OFFLOAD_SOURCE_DIR "/configs/";

struct Result {
    int code = -1;
    std::string output;
};

Result run(const std::string& args, const std::string& env = "") {
    std::string cmd = env + " " + kBin + " " + args + " 2>&1";
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p);
    std::array<char, 4096> buf;
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.output.append(buf.data(), n);
    int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path scratch(const std::string& name) {
    auto d = fs::temp_directory_path() / ("offload-cli-" + std::to_string(::getpid())) / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool healthy(int port) {
    try {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in a{};
        a.sin_family = AF_INET;
        a.sin_port = htons(static_cast<std::uint16_t>(port));
        a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        bool ok = ::connect(fd, reinterpret_cast<sockaddr*>(&a), sizeof a) == 0;
        if (ok) {
            auto req = offload::format_request("GET", "/healthz", "t");
            ok = ::send(fd, req.data(), req.size(), MSG_NOSIGNAL) == static_cast<ssize_t>(req.size());
            char buf[512];
            auto n = ok ? ::recv(fd, buf, sizeof buf, 0) : 0;
            ok = n > 0 && std::string(buf, static_cast<std::size_t>(n)).find("200 OK") != std::string::npos;
        }
        ::close(fd);
        return ok;
    } catch (...) {
        return false;
    }
}

}  // namespace

TEST_CASE("missing scenario exits 2 naming the path") {
    auto r = run("serve --scenario /no/such/scenario.json --bind 127.0.0.1:0");
    CHECK(r.code == 2);
    CHECK(r.output.find("/no/such/scenario.json") != std::string::npos);
    CHECK(run("bench --sim /no/such.json --users 10:10:10").code == 2);
}

TEST_CASE("usage errors exit 2") {
    CHECK(run("bench --users 10:10:10").code == 2);
    CHECK(run("bench --sim a.json --url 127.0.0.1:1").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("--help").code == 0);
}

TEST_CASE("unreachable target exits 3") {
    auto out = scratch("unreach");
    auto r = run("bench --url 127.0.0.1:1 --users 10:10:10 --out " + out.string());
    CHECK(r.code == 3);
}

TEST_CASE("bench single level and op mapping") {
    auto out = scratch("single");
    auto r = run("bench --sim " + kConfigs + "edge-swarm.json --users 10:10:10 --op write --warmup 0.5 --measure 1 --out " +
                 out.string());
    REQUIRE_MESSAGE(r.code == 0, r.output);
    auto rows = offload::read_csv(out / "swarm_edge_write.csv");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].users == 10);
    CHECK(rows[0].op == "write");
    CHECK(fs::exists(out / "swarm_edge_write.svg"));
}

TEST_CASE("bench output directory defaults from the environment") {
    auto out = scratch("envout");
    auto r = run("bench --sim " + kConfigs + "edge-mono.json --users 5:10:5 --warmup 0.5 --measure 1",
                 "OFFLOAD_BENCH_OUT=" + out.string());
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(offload::read_csv(out / "monolithic_edge_read.csv").size() == 2);
}

TEST_CASE("sim seed gives byte-identical output") {
    auto a = scratch("seed-a"), b = scratch("seed-b");
    std::string args = "bench --sim " + kConfigs + "cloud-kube.json --users 20:60:20 --op mixed --seed 5 --warmup 1 --measure 2 --out ";
    REQUIRE(run(args + a.string()).code == 0);
    REQUIRE(run(args + b.string()).code == 0);
    CHECK(slurp(a / "kube_cloud_mixed.csv") == slurp(b / "kube_cloud_mixed.csv"));
    CHECK(slurp(a / "kube_cloud_mixed.svg") == slurp(b / "kube_cloud_mixed.svg"));
}

TEST_CASE("compare overlays curves and tabulates knees") {
    auto out = scratch("compare");
    std::string csvs;
    for (const char* m : {"mono", "swarm", "kube"}) {
        auto r = run(std::string("bench --sim ") + kConfigs + "edge-" + m + ".json --users 50:150:50 --warmup 0.5 --measure 1 --out " +
                     out.string());
        REQUIRE_MESSAGE(r.code == 0, r.output);
    }
    for (const char* m : {"monolithic", "swarm", "kube"}) csvs += " " + (out / (std::string(m) + "_edge_read.csv")).string();
    auto cmp = scratch("compare-out");
    auto r = run("compare" + csvs + " --out " + cmp.string());
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(fs::exists(cmp / "compare.svg"));
    auto knees = slurp(cmp / "knees.csv");
    CHECK(std::count(knees.begin(), knees.end(), '\n') == 4);

    auto single = scratch("compare-single");
    CHECK(run("compare " + (out / "swarm_edge_read.csv").string() + " --out " + single.string()).code == 0);
    CHECK(fs::exists(single / "compare.svg"));

    std::ofstream(cmp / "bad.csv") << "users,mean\n1,2\n";
    CHECK(run("compare " + (cmp / "bad.csv").string() + " --out " + cmp.string()).code == 2);
}

TEST_CASE("sim writes a trace") {
    auto out = scratch("trace");
    auto r = run("sim --scenario " + kConfigs + "edge-kube.json --users 5 --warmup 0.2 --measure 0.5 --trace " +
                 (out / "t.txt").string() + " --csv " + (out / "s.csv").string());
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(fs::file_size(out / "t.txt") > 0);
    CHECK(offload::read_csv(out / "s.csv").size() == 1);
}

TEST_CASE("compact rewrites a log") {
    auto out = scratch("compact");
    auto log = out / "store.log";
    {
        std::ofstream f(log);
        f << R"({"key":[1,2,3,4,5,6,7],"config":{"modulation":"BPSK","code_rate":1.0,"bandwidth_hz":1.0,"tx_power_dbm":0.0,"predicted_snr_db":0.0,"predicted_ber":0.5},"version":1,"written_ts":0})"
          << "\n"
          << R"({"key":[1,2,3,4,5,6,7],"config":{"modulation":"QPSK","code_rate":1.0,"bandwidth_hz":1.0,"tx_power_dbm":0.0,"predicted_snr_db":0.0,"predicted_ber":0.5},"version":2,"written_ts":0})"
          << "\n";
    }
    auto r = run("compact --log " + log.string());
    REQUIRE_MESSAGE(r.code == 0, r.output);
    auto text = slurp(log);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1);
    CHECK(text.find("QPSK") != std::string::npos);
}

TEST_CASE("serve answers healthz and exits 0 on SIGINT") {
    int port = 20000 + static_cast<int>(::getpid() % 20000);
    pid_t pid = fork();
    if (pid == 0) {
        std::string scen = kConfigs + "edge-mono.json";
        std::string bind = "127.0.0.1:" + std::to_string(port);
        int devnull = ::open("/dev/null", O_WRONLY);
        ::dup2(devnull, 1);
        ::execl(kBin.c_str(), kBin.c_str(), "serve", "--scenario", scen.c_str(), "--bind", bind.c_str(), "--grace", "1",
                static_cast<char*>(nullptr));
        _exit(127);
    }
    bool up = false;
    for (int i = 0; i < 100 && !up; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        up = healthy(port);
    }
    CHECK(up);
    kill(pid, SIGINT);
    int status = 0;
    waitpid(pid, &status, 0);
    CHECK(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
}
