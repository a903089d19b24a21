#pragma once

#include <iostream>
#include <sstream>

#include "config.hpp"
#include "sim.hpp"

namespace bubblesim {

struct run_result {
    metrics m;
    std::string trace_bytes;
    std::vector<trace_record> records;
    bool completed = false;
    std::vector<std::string> warnings;
    std::uint64_t max_inspections_per_lookup = 0;
    std::uint64_t sequential_ticks = 0;
};

/// Builds and runs one configured scenario end to end.
inline run_result execute_run(const run_config& cfg, std::ostream* trace_sink = nullptr,
                              bool validate_each_event = false) {
    topology topo(cfg.topo);
    workload wl = build_workload(cfg, topo);

    sim_options so;
    so.cost = cfg.cost;
    so.until = cfg.until == 0 ? time_infinity : cfg.until;
    so.validate_each_event = validate_each_event;
    simulation sim(std::move(topo), so);

    if (trace_sink) sim.machine().trace().set_sink(trace_sink);
    if (cfg.no_trace) sim.machine().trace().disable_store(true);

    if (cfg.sched.kind == "bubble") {
        sim.use_bubble_scheduler({.retry_limit = cfg.sched.retry_limit,
                                  .idle_repair = cfg.sched.idle_repair,
                                  .repair_cooldown = cfg.sched.repair_cooldown});
    } else if (cfg.sched.kind == "opportunist") {
        sim.use_opportunist({.global_list = cfg.sched.opportunist_mode == "global",
                             .affinity = cfg.sched.affinity});
    } else if (cfg.sched.kind == "bound") {
        sim.use_bound(wl.bindings);
    } else {
        throw config_error("unknown scheduler '" + cfg.sched.kind + "'");
    }

    sim.load(wl);
    run_result res;
    res.m = sim.run();
    res.completed = sim.completed();
    res.trace_bytes = cfg.no_trace ? std::string{} : sim.machine().trace().to_bytes();
    res.records = sim.machine().trace().records();
    res.warnings = sim.machine().warnings();
    res.max_inspections_per_lookup = sim.machine().counters().max_inspections_per_lookup;
    res.sequential_ticks = sim.sequential_ticks();
    return res;
}

/// Invariant property suite behind `--selftest`: conservation sweeps, the
/// lookup retry property and trace determinism over a set of small
/// scenarios. Prints one line per check; returns false on any failure.
inline bool selftest(std::ostream& out) {
    bool ok = true;
    auto check = [&](const std::string& name, bool pass) {
        out << (pass ? "ok   " : "FAIL ") << name << "\n";
        ok = ok && pass;
    };

    auto base = [] {
        run_config cfg;
        cfg.topo = machine_of({{level_kind::numa, 4}, {level_kind::core, 4}});
        return cfg;
    };

    // conservation sweep after every event, across scenarios and schedulers
    try {
        run_config cfg = base();
        cfg.scenario.name = "fibonacci";
        cfg.scenario.fib_n = 9;
        execute_run(cfg, nullptr, true);
        cfg.scenario.bubble_mode = false;
        execute_run(cfg, nullptr, true);
        cfg.sched.kind = "opportunist";
        execute_run(cfg, nullptr, true);
        check("conservation sweep: fibonacci (bubble, flat, opportunist)", true);
    } catch (const std::exception& e) {
        out << "     error: " << e.what() << "\n";
        check("conservation sweep: fibonacci (bubble, flat, opportunist)", false);
    }
    try {
        run_config cfg = base();
        cfg.scenario.name = "conduction";
        cfg.scenario.cycles = 10;
        cfg.scenario.work = 200;
        for (const char* k : {"bubble", "opportunist", "bound"}) {
            cfg.sched.kind = k;
            execute_run(cfg, nullptr, true);
        }
        cfg.sched.kind = "bubble";
        cfg.scenario.light_group = 0;
        cfg.scenario.barrier = false;
        cfg.scenario.grouping = "per_numa_pairs";
        cfg.scenario.threads = 32;
        execute_run(cfg, nullptr, true);
        check("conservation sweep: conduction (three schedulers + imbalance)", true);
    } catch (const std::exception& e) {
        out << "     error: " << e.what() << "\n";
        check("conservation sweep: conduction (three schedulers + imbalance)", false);
    }
    try {
        run_config cfg = base();
        cfg.topo = machine_of({{level_kind::core, 2}});
        cfg.scenario.name = "gang";
        execute_run(cfg, nullptr, true);
        check("conservation sweep: gang demo", true);
    } catch (const std::exception& e) {
        out << "     error: " << e.what() << "\n";
        check("conservation sweep: gang demo", false);
    }

    // two-pass retry property
    try {
        machine_state m(topology(machine_of({{level_kind::numa, 4}, {level_kind::core, 4}})));
        bubble_scheduler sched(m);
        task_id a = m.create_thread_dontsched(10, make_program({segment::compute(1)}));
        m.enqueue(a, m.topo().leaf_node(0));
        task_id b = m.create_thread_dontsched(5, make_program({segment::compute(1)}));
        m.enqueue(b, m.topo().root());
        sched.inject_interference(sched.lookups_done() + 1, m.topo().leaf_node(0));
        auto d = sched.find_next_task(0, 0);
        bool pass = std::holds_alternative<run_thread>(d) &&
                    std::get<run_thread>(d).thread == b && m.counters().retries == 1;
        check("two-pass lookup: injected interference retries exactly once", pass);
    } catch (const std::exception& e) {
        out << "     error: " << e.what() << "\n";
        check("two-pass lookup: injected interference retries exactly once", false);
    }

    // determinism: identical config+seed, byte-identical traces
    try {
        run_config cfg = base();
        cfg.scenario.name = "conduction";
        cfg.scenario.cycles = 8;
        cfg.scenario.work_jitter = 50;
        auto r1 = execute_run(cfg);
        auto r2 = execute_run(cfg);
        check("determinism: identical trace bytes for identical config+seed",
              !r1.trace_bytes.empty() && r1.trace_bytes == r2.trace_bytes);
    } catch (const std::exception& e) {
        out << "     error: " << e.what() << "\n";
        check("determinism: identical trace bytes for identical config+seed", false);
    }

    return ok;
}

} // namespace bubblesim
