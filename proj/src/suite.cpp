#include "offload/suite.hpp"

#include <map>

#include "offload/errors.hpp"

namespace offload {

Suite load_suite(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("suite file not found: " + path.string());
    Json j = load_json_file(path.string());
    auto base = path.parent_path();
    Suite s;
    s.name = path.stem().string();
    try {
        s.name = j.value("name", s.name);
        s.seed = j.value("seed", s.seed);
        s.alpha = j.value("alpha", s.alpha);
        if (auto it = j.find("ops"); it != j.end()) {
            s.ops.clear();
            for (const auto& o : *it) s.ops.push_back(parse_op(o.get<std::string>()));
        }
        if (auto it = j.find("sweep"); it != j.end()) {
            if (auto u = it->find("users"); u != it->end()) s.plan.levels = SweepPlan::parse_range(u->get<std::string>());
            s.plan.warmup_s = it->value("warmup_s", s.plan.warmup_s);
            s.plan.measure_s = it->value("measure_s", s.plan.measure_s);
        }
        s.plan.validate();
        for (const auto& entry : j.at("scenarios")) {
            if (entry.is_string()) {
                auto p = std::filesystem::path(entry.get<std::string>());
                s.scenarios.push_back(load_scenario(p.is_absolute() ? p : base / p));
            } else {
                s.scenarios.push_back(scenario_from_json(entry, base, path.string()));
            }
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (s.scenarios.empty()) throw ConfigError(path.string() + ": no scenarios");
    return s;
}

std::string series_label(const SummaryRow& row) { return row.mode + "/" + row.site + "/" + row.op; }

std::string knee_table_csv(const std::vector<Series>& series, double alpha) {
    std::string out = "label,mode,site,op,knee_users\n";
    for (const auto& s : series) {
        if (s.rows.empty()) continue;
        auto knee = knee_detect(s.rows, alpha);
        const auto& r = s.rows.front();
        out += s.label + "," + r.mode + "," + r.site + "," + r.op + "," + (knee ? std::to_string(*knee) : "") + "\n";
    }
    return out;
}

std::vector<SuiteRun> run_suite(const Suite& suite, const std::optional<std::filesystem::path>& out_dir,
                                const std::function<void(const SuiteRun&, const SummaryRow&)>& progress) {
    std::vector<SuiteRun> runs;
    std::map<Op, std::vector<Series>> by_op;
    for (const auto& sc : suite.scenarios) {
        for (Op op : suite.ops) {
            SuiteRun run;
            run.scenario = sc;
            run.op = op;
            Workload w = Workload::for_op(op);
            SimTarget target(sc, sc.seed.value_or(suite.seed));
            std::optional<std::filesystem::path> csv;
            if (out_dir)
                csv = *out_dir / (std::string(to_string(sc.mode)) + "_" + std::string(to_string(sc.site)) + "_" +
                                  std::string(to_string(op)) + ".csv");
            run.output = run_sweep(suite.plan, w, target, csv,
                                   [&](const SummaryRow& row) { if (progress) progress(run, row); });
            run.output.report.knee_users = knee_detect(run.output.report.rows, suite.alpha);
            if (out_dir && !run.output.report.rows.empty())
                emit_svg(run.output.report.rows, svg_path_for(*out_dir, run.output.report.rows.front()));
            if (!run.output.report.rows.empty())
                by_op[op].push_back(Series{series_label(run.output.report.rows.front()), run.output.report.rows});
            runs.push_back(std::move(run));
        }
    }
    if (out_dir) {
        std::string knees = "label,mode,site,op,knee_users\n";
        for (const auto& [op, series] : by_op) {
            write_text(*out_dir / ("compare_" + std::string(to_string(op)) + ".svg"),
                       render_svg(series, suite.name + ": " + std::string(to_string(op))));
            auto table = knee_table_csv(series, suite.alpha);
            knees += table.substr(table.find('\n') + 1);
        }
        write_text(*out_dir / "knees.csv", knees);
    }
    return runs;
}

}  // namespace offload
