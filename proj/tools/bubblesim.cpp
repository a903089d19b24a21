// Scenario-driven front end for the bubble-scheduling simulator: parse a
// config, assemble topology + scheduler + workload, run, emit trace and
// metrics. `--compare` runs the same scenario under all three schedulers.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "bubblesim/bubblesim.hpp"

using namespace bubblesim;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config_error = 1;
constexpr int exit_sim_abort = 2;
constexpr int exit_selftest_failure = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_metrics(const metrics& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot open metrics output '" + path + "'");
    if (path.size() > 4 && path.substr(path.size() - 4) == ".csv")
        out << metrics::csv_header() << "\n" << m.to_csv_row() << "\n";
    else
        out << m.to_keyvalue();
}

int run_single(const run_config& cfg) {
    std::ofstream trace_file;
    std::ostream* sink = nullptr;
    if (!cfg.trace_out.empty()) {
        trace_file.open(cfg.trace_out);
        if (!trace_file)
            throw config_error("cannot open trace output '" + cfg.trace_out + "'");
        sink = &trace_file;
    }
    run_result res = execute_run(cfg, sink);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    if (!cfg.metrics_out.empty()) write_metrics(res.m, cfg.metrics_out);
    std::cout << res.m.to_keyvalue();
    return exit_ok;
}

int run_compare(const run_config& base) {
    // One scenario instance, three schedulers: the workload construction is
    // pure, so identical seeds give identical work draws per run.
    struct row {
        std::string name;
        bool ok = false;
        metrics m;
        std::string note;
    };
    std::vector<row> rows;
    const std::uint64_t seq_ticks =
        build_workload(base, topology(base.topo)).total_work() *
        base.cost.tick_per_work_unit;

    for (const std::string kind : {"opportunist", "bound", "bubble"}) {
        run_config cfg = base;
        cfg.sched.kind = kind;
        cfg.trace_out.clear();
        cfg.metrics_out.clear();
        row r;
        r.name = kind == "opportunist" ? "simple" : kind == "bound" ? "bound" : "bubbles";
        try {
            r.m = execute_run(cfg).m;
            r.ok = true;
        } catch (const config_error& e) {
            r.note = e.what();
        }
        rows.push_back(std::move(r));
    }

    std::cout << std::left << std::setw(12) << "scheduler" << std::right
              << std::setw(14) << "time(ticks)" << std::setw(10) << "speedup" << "\n";
    for (const auto& r : rows) {
        std::cout << std::left << std::setw(12) << r.name;
        if (r.ok)
            std::cout << std::right << std::setw(14) << r.m.makespan << std::setw(10)
                      << std::fixed << std::setprecision(2) << r.m.speedup_vs_sequential
                      << "\n";
        else
            std::cout << std::right << std::setw(14) << "n/a" << std::setw(10) << "-"
                      << "   (" << r.note << ")\n";
    }
    std::cout << "(sequential reference: " << seq_ticks << " ticks)\n";
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"bubblesim: hierarchical bubble-scheduling simulator"};
    std::string config_path;
    std::string scheduler_override;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::uint64_t until = 0;
    bool until_set = false;
    std::string trace_out, metrics_out;
    bool no_trace = false, compare = false, run_selftest = false;

    app.add_option("--config", config_path, "scenario config file");
    app.add_option("--scheduler", scheduler_override,
                   "override the configured scheduler: bubble|opportunist|bound");
    app.add_option("--seed", seed, "workload generation seed")
        ->each([&](const std::string&) { seed_set = true; });
    app.add_option("--until", until, "stop the simulation at this tick")
        ->each([&](const std::string&) { until_set = true; });
    app.add_option("--trace-out", trace_out, "write the trace stream to this file");
    app.add_option("--metrics-out", metrics_out,
                   "write metrics to this file (.csv for a CSV row)");
    app.add_flag("--no-trace", no_trace, "do not record or write a trace");
    app.add_flag("--compare", compare,
                 "run simple/bound/bubbles on the scenario and print a comparison");
    app.add_flag("--selftest", run_selftest, "run the invariant property suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_selftest) {
            bool ok = selftest(std::cout);
            std::cout << (ok ? "selftest passed\n" : "selftest FAILED\n");
            return ok ? exit_ok : exit_selftest_failure;
        }
        if (config_path.empty()) {
            std::cerr << "error: --config is required (or use --selftest)\n";
            return exit_config_error;
        }
        run_config cfg = parse_config(read_file(config_path));
        if (!scheduler_override.empty()) cfg.sched.kind = scheduler_override;
        if (seed_set) cfg.seed = seed;
        if (until_set) cfg.until = until;
        if (!trace_out.empty()) cfg.trace_out = trace_out;
        if (!metrics_out.empty()) cfg.metrics_out = metrics_out;
        if (no_trace) {
            cfg.no_trace = true;
            cfg.trace_out.clear();
        }
        if (cfg.sched.kind != "bubble" && cfg.sched.kind != "opportunist" &&
            cfg.sched.kind != "bound")
            throw config_error("unknown scheduler '" + cfg.sched.kind + "'");

        return compare ? run_compare(cfg) : run_single(cfg);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config_error;
    } catch (const sim_abort& e) {
        std::cerr << "simulation aborted: " << e.what() << "\n";
        return exit_sim_abort;
    } catch (const invariant_violation& e) {
        std::cerr << "invariant violation: " << e.what() << "\n";
        return exit_sim_abort;
    }
}
