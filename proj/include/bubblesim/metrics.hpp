#pragma once

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "trace.hpp"
#include "world.hpp"

namespace bubblesim {

/// Execution cost model. Memory affinity is an execution-rate multiplier:
/// a thread running on a processor outside its data home node pays the NUMA
/// factor on every tick, plus a one-off penalty when it changes processor.
struct cost_model {
    std::uint64_t tick_per_work_unit = 1;
    double numa_factor = 3.0;
    std::uint64_t migration_penalty = 5;
    std::uint64_t context_switch_cost = 1;
    std::uint64_t thread_quantum = 100;

    void validate() const {
        if (numa_factor < 1.0) throw config_error("numa_factor must be >= 1");
        if (tick_per_work_unit == 0) throw config_error("tick_per_work_unit must be >= 1");
        if (thread_quantum == 0) throw config_error("thread_quantum must be >= 1");
    }

    std::uint64_t ticks_per_unit(bool remote) const {
        double t = static_cast<double>(tick_per_work_unit) * (remote ? numa_factor : 1.0);
        return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(t)));
    }
};

struct metrics {
    sim_time makespan = 0;
    std::vector<std::uint64_t> busy;   // per cpu, includes switch and migration costs
    std::vector<std::uint64_t> idle;   // makespan - busy, clamped
    std::vector<std::uint64_t> remote; // execution ticks at the remote rate
    std::uint64_t migrations = 0;
    double remote_ratio = 0.0; // total remote / total busy
    std::uint64_t bursts = 0;
    std::uint64_t regenerations = 0;
    std::uint64_t hoists = 0;
    std::uint64_t steals = 0;
    std::uint64_t retries = 0;
    std::uint64_t list_inspections = 0;
    double speedup_vs_sequential = 0.0;

    std::uint64_t total_busy() const {
        return std::accumulate(busy.begin(), busy.end(), std::uint64_t{0});
    }
    std::uint64_t total_remote() const {
        return std::accumulate(remote.begin(), remote.end(), std::uint64_t{0});
    }

    void finish(std::uint64_t sequential_ticks) {
        idle.assign(busy.size(), 0);
        for (std::size_t c = 0; c < busy.size(); ++c)
            idle[c] = makespan > busy[c] ? makespan - busy[c] : 0;
        std::uint64_t b = total_busy();
        remote_ratio = b ? static_cast<double>(total_remote()) / static_cast<double>(b) : 0.0;
        speedup_vs_sequential =
            makespan ? static_cast<double>(sequential_ticks) / static_cast<double>(makespan)
                     : 0.0;
    }

    std::string to_keyvalue() const {
        std::ostringstream os;
        os << "makespan=" << makespan << '\n';
        os << "busy_ticks=" << total_busy() << '\n';
        os << "remote_ticks=" << total_remote() << '\n';
        os << "remote_ratio=" << remote_ratio << '\n';
        os << "migrations=" << migrations << '\n';
        os << "bursts=" << bursts << '\n';
        os << "regenerations=" << regenerations << '\n';
        os << "hoists=" << hoists << '\n';
        os << "steals=" << steals << '\n';
        os << "retries=" << retries << '\n';
        os << "list_inspections=" << list_inspections << '\n';
        os << "speedup=" << speedup_vs_sequential << '\n';
        return os.str();
    }

    static std::string csv_header() {
        return "makespan,busy,remote,remote_ratio,migrations,bursts,regenerations,"
               "hoists,steals,retries,list_inspections,speedup";
    }

    std::string to_csv_row() const {
        std::ostringstream os;
        os << makespan << ',' << total_busy() << ',' << total_remote() << ','
           << remote_ratio << ',' << migrations << ',' << bursts << ','
           << regenerations << ',' << hoists << ',' << steals << ',' << retries << ','
           << list_inspections << ',' << speedup_vs_sequential;
        return os.str();
    }
};

/// Rebuilds aggregate metrics from a trace alone. The online counters are
/// the authoritative path; this is the second route of the consistency check
/// (list inspections are not traced and stay zero here).
inline metrics summarize(const std::vector<trace_record>& records, std::size_t cpus,
                         std::uint64_t sequential_ticks) {
    metrics m;
    m.busy.assign(cpus, 0);
    m.remote.assign(cpus, 0);
    for (const auto& r : records) {
        m.makespan = std::max(m.makespan, r.time);
        switch (r.kind) {
        case trace_kind::run: {
            std::uint64_t csc = r.get("csc", 0);
            std::uint64_t pen = r.get("pen", 0);
            std::uint64_t dur = r.get("dur", 0);
            m.busy[r.cpu] += csc + pen + dur;
            if (r.get("remote", 0)) m.remote[r.cpu] += dur;
            if (r.get("mig", 0)) ++m.migrations;
            m.makespan = std::max(m.makespan, r.time + csc + pen + dur);
            break;
        }
        case trace_kind::burst: ++m.bursts; break;
        case trace_kind::regenerate: ++m.regenerations; break;
        case trace_kind::hoist: ++m.hoists; break;
        case trace_kind::steal: ++m.steals; break;
        case trace_kind::retry: ++m.retries; break;
        default: break;
        }
    }
    m.finish(sequential_ticks);
    return m;
}

} // namespace bubblesim
