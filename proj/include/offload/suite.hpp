#pragma once

// A named set of scenarios swept with one plan, e.g. the calibrated
// edge/cloud x mono/swarm/kube comparison.
//
// File format:
//   {"seed": 7, "alpha": 3.0, "ops": ["read", "write"],
//    "sweep": {"users": "50:1300:50", "warmup_s": 5, "measure_s": 10},
//    "scenarios": ["cloud-mono.json", {...inline scenario...}]}

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "offload/loadgen.hpp"
#include "offload/scenario.hpp"

namespace offload {

struct Suite {
    std::string name;
    std::vector<Scenario> scenarios;
    std::vector<Op> ops{Op::Read, Op::Write};
    SweepPlan plan = SweepPlan::default_plan();
    double alpha = 3.0;
    std::uint64_t seed = 1;
};

Suite load_suite(const std::filesystem::path& path);

struct SuiteRun {
    Scenario scenario;
    Op op = Op::Read;
    SweepOutput output;
};

// Runs every (scenario, op) sweep. With out_dir set, writes one CSV and SVG
// per sweep plus compare_<op>.svg and knees.csv.
std::vector<SuiteRun> run_suite(const Suite& suite, const std::optional<std::filesystem::path>& out_dir,
                                const std::function<void(const SuiteRun&, const SummaryRow&)>& progress = {});

std::string series_label(const SummaryRow& row);
std::string knee_table_csv(const std::vector<Series>& series, double alpha);

}  // namespace offload
