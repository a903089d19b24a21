#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "baseline_sched.hpp"
#include "bubble_sched.hpp"
#include "metrics.hpp"
#include "topology.hpp"
#include "workloads.hpp"

namespace bubblesim {

/// Everything a run needs, as written in a scenario config file. One config
/// file describes one scenario; sweeps are driven externally.
struct scenario_spec {
    std::string name; // fibonacci | conduction | gang

    // fibonacci
    int fib_n = 10;
    int fib_threshold = 2;
    std::uint64_t leaf_work = 40;
    std::uint64_t pre_work = 2;
    std::uint64_t post_work = 8;
    bool bubble_mode = true;

    // conduction
    std::uint32_t threads = 16;
    std::uint32_t cycles = 50;
    std::uint64_t work = 500;            // uniform stripe work
    std::vector<std::uint64_t> work_list; // explicit per-thread override
    int light_group = -1;                // NUMA group index (or -1) ...
    double light_scale = 0.5;            // ... running at this fraction of the work
    std::string grouping = "per_numa";   // flat | per_numa | per_numa_pairs
    bool barrier = true;
    std::uint64_t work_jitter = 0;

    // gang
    std::uint32_t pairs = 4;
    std::uint64_t pair_work = 500;
    priority comm_priority = 20;
    std::uint64_t comm_work = 4000;
    sim_time pair_slice = 200;

    int burst_level = -1; // innermost bubbles' burst level; -1 = deepest

    bool operator==(const scenario_spec&) const = default;
};

struct scheduler_options {
    std::string kind = "bubble"; // bubble | opportunist | bound
    int retry_limit = 8;
    bool idle_repair = true;
    sim_time repair_cooldown = 200;
    std::string opportunist_mode = "percpu"; // percpu | global
    bool affinity = true;

    bool operator==(const scheduler_options&) const = default;
};

struct run_config {
    topology_spec topo;
    scheduler_options sched;
    cost_model cost;
    scenario_spec scenario;
    std::uint64_t seed = 1;
    sim_time until = 0; // 0 = run to completion
    std::string trace_out;
    std::string metrics_out;
    bool no_trace = false;
    std::vector<cpu_id> bindings; // explicit bound-mode map; empty = scenario default
    priority max_priority = 100;

    bool operator==(const run_config& o) const {
        return topo == o.topo && sched == o.sched &&
               cost.tick_per_work_unit == o.cost.tick_per_work_unit &&
               cost.numa_factor == o.cost.numa_factor &&
               cost.migration_penalty == o.cost.migration_penalty &&
               cost.context_switch_cost == o.cost.context_switch_cost &&
               cost.thread_quantum == o.cost.thread_quantum &&
               scenario == o.scenario && seed == o.seed && until == o.until &&
               trace_out == o.trace_out && metrics_out == o.metrics_out &&
               no_trace == o.no_trace && bindings == o.bindings &&
               max_priority == o.max_priority;
    }
};

namespace detail {

struct config_entry {
    std::string value;
    int line = 0;
    bool used = false;
};

struct config_tree {
    std::map<std::string, config_entry> entries; // "section.key" or "key"

    const config_entry* find(const std::string& key) const {
        auto it = entries.find(key);
        return it == entries.end() ? nullptr : &it->second;
    }
};

[[noreturn]] inline void fail(int line, const std::string& msg) {
    throw config_error("config line " + std::to_string(line) + ": " + msg);
}

inline nlohmann::json parse_value(const std::string& raw, int line) {
    auto j = nlohmann::json::parse(raw, nullptr, false);
    if (!j.is_discarded()) return j;
    // bare word: a string without quotes
    for (char c : raw)
        if (c == '=' || c == '[' || c == ']' || c == '{' || c == '}')
            fail(line, "cannot parse value '" + raw + "'");
    return nlohmann::json(raw);
}

inline config_tree lex_config(const std::string& text) {
    config_tree tree;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // strip comments (a # outside quotes)
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        auto ltrim = line.find_first_not_of(" \t\r");
        if (ltrim == std::string::npos) continue;
        auto rtrim = line.find_last_not_of(" \t\r");
        std::string trimmed = line.substr(ltrim, rtrim - ltrim + 1);
        if (trimmed.front() == '[' && trimmed.back() == ']' &&
            trimmed.find('=') == std::string::npos) {
            section = trimmed.substr(1, trimmed.size() - 2);
            if (section.empty()) fail(lineno, "empty section name");
            continue;
        }
        auto eq = trimmed.find('=');
        if (eq == std::string::npos) fail(lineno, "expected key = value");
        std::string key = trimmed.substr(0, eq);
        std::string value = trimmed.substr(eq + 1);
        auto kend = key.find_last_not_of(" \t");
        key.resize(kend == std::string::npos ? 0 : kend + 1);
        auto vstart = value.find_first_not_of(" \t");
        value = vstart == std::string::npos ? "" : value.substr(vstart);
        if (key.empty() || value.empty()) fail(lineno, "expected key = value");
        std::string full = section.empty() ? key : section + "." + key;
        if (tree.entries.count(full)) fail(lineno, "duplicate key '" + full + "'");
        tree.entries[full] = {value, lineno, false};
    }
    return tree;
}

class config_reader {
public:
    explicit config_reader(config_tree tree) : tree_(std::move(tree)) {}

    template <typename T>
    bool get(const std::string& key, T& out) {
        auto it = tree_.entries.find(key);
        if (it == tree_.entries.end()) return false;
        it->second.used = true;
        nlohmann::json j = parse_value(it->second.value, it->second.line);
        try {
            out = j.get<T>();
        } catch (const nlohmann::json::exception&) {
            fail(it->second.line, "wrong type for '" + key + "'");
        }
        return true;
    }

    int line_of(const std::string& key) const {
        auto* e = tree_.find(key);
        return e ? e->line : 0;
    }

    void check_all_used() const {
        for (const auto& [key, e] : tree_.entries)
            if (!e.used) fail(e.line, "unknown key '" + key + "'");
    }

private:
    config_tree tree_;
};

} // namespace detail

inline topology_spec parse_topology_value(const nlohmann::json& j, int line) {
    topology_spec spec{{level_kind::machine, 1}};
    if (!j.is_array()) detail::fail(line, "topology must be a list of [kind, count] pairs");
    for (const auto& lvl : j) {
        if (!lvl.is_array() || lvl.size() != 2 || !lvl[0].is_string() ||
            !lvl[1].is_number_unsigned())
            detail::fail(line, "topology level must be [\"kind\", count]");
        auto kind = kind_from_name(lvl[0].get<std::string>());
        if (!kind) detail::fail(line, "unknown level kind '" + lvl[0].get<std::string>() + "'");
        spec.push_back({*kind, lvl[1].get<std::uint32_t>()});
    }
    return spec;
}

/// Parses the scenario configuration grammar: `key = value` lines with
/// `[cost]`, `[scheduler]`, `[scenario]` and `[output]` sections; values are
/// JSON literals or bare words. Unknown keys, type errors and inconsistent
/// combinations are reported with their line number.
inline run_config parse_config(const std::string& text) {
    detail::config_reader r(detail::lex_config(text));
    run_config cfg;

    // topology (required)
    {
        nlohmann::json j;
        if (!r.get("topology", j))
            throw config_error("config: missing required key 'topology'");
        cfg.topo = parse_topology_value(j, r.line_of("topology"));
    }

    r.get("scheduler", cfg.sched.kind);
    r.get("scheduler.kind", cfg.sched.kind);
    r.get("scheduler.retry_limit", cfg.sched.retry_limit);
    r.get("scheduler.idle_repair", cfg.sched.idle_repair);
    r.get("scheduler.repair_cooldown", cfg.sched.repair_cooldown);
    r.get("scheduler.opportunist_mode", cfg.sched.opportunist_mode);
    r.get("scheduler.affinity", cfg.sched.affinity);

    r.get("cost.tick_per_work_unit", cfg.cost.tick_per_work_unit);
    r.get("cost.numa_factor", cfg.cost.numa_factor);
    r.get("cost.migration_penalty", cfg.cost.migration_penalty);
    r.get("cost.context_switch_cost", cfg.cost.context_switch_cost);
    r.get("cost.thread_quantum", cfg.cost.thread_quantum);

    scenario_spec& sc = cfg.scenario;
    if (!r.get("scenario.name", sc.name))
        throw config_error("config: missing required key 'scenario.name'");
    r.get("scenario.n", sc.fib_n);
    r.get("scenario.threshold", sc.fib_threshold);
    r.get("scenario.leaf_work", sc.leaf_work);
    r.get("scenario.pre_work", sc.pre_work);
    r.get("scenario.post_work", sc.post_work);
    r.get("scenario.bubble_mode", sc.bubble_mode);
    r.get("scenario.threads", sc.threads);
    r.get("scenario.cycles", sc.cycles);
    r.get("scenario.work", sc.work);
    r.get("scenario.work_list", sc.work_list);
    r.get("scenario.light_group", sc.light_group);
    r.get("scenario.light_scale", sc.light_scale);
    r.get("scenario.grouping", sc.grouping);
    r.get("scenario.barrier", sc.barrier);
    r.get("scenario.work_jitter", sc.work_jitter);
    r.get("scenario.pairs", sc.pairs);
    r.get("scenario.pair_work", sc.pair_work);
    r.get("scenario.comm_priority", sc.comm_priority);
    r.get("scenario.comm_work", sc.comm_work);
    r.get("scenario.pair_slice", sc.pair_slice);
    r.get("scenario.burst_level", sc.burst_level);

    r.get("seed", cfg.seed);
    r.get("until", cfg.until);
    r.get("max_priority", cfg.max_priority);
    r.get("output.trace", cfg.trace_out);
    r.get("output.metrics", cfg.metrics_out);
    r.get("output.no_trace", cfg.no_trace);
    r.get("bindings", cfg.bindings);

    r.check_all_used();

    // cross-validation
    topology topo(cfg.topo); // also validates the level list
    if (cfg.sched.kind != "bubble" && cfg.sched.kind != "opportunist" &&
        cfg.sched.kind != "bound")
        throw config_error("config: unknown scheduler '" + cfg.sched.kind + "'");
    if (cfg.sched.opportunist_mode != "percpu" && cfg.sched.opportunist_mode != "global")
        throw config_error("config: unknown opportunist_mode '" +
                           cfg.sched.opportunist_mode + "'");
    if (sc.name != "fibonacci" && sc.name != "conduction" && sc.name != "gang")
        throw config_error("config: unknown scenario '" + sc.name + "'");
    if (sc.grouping != "flat" && sc.grouping != "per_numa" &&
        sc.grouping != "per_numa_bubbles" && sc.grouping != "per_numa_pairs")
        throw config_error("config: unknown grouping '" + sc.grouping + "'");
    if (sc.burst_level >= static_cast<int>(topo.depth()))
        throw config_error("config: scenario burst_level " +
                           std::to_string(sc.burst_level) +
                           " is deeper than the machine (depth " +
                           std::to_string(topo.depth()) + ")");
    cfg.cost.validate();
    for (cpu_id c : cfg.bindings)
        if (c >= topo.num_cpus())
            throw config_error("config: binding names cpu " + std::to_string(c) +
                               " beyond the machine");
    return cfg;
}

inline std::string serialize_config(const run_config& cfg) {
    std::ostringstream os;
    os << "topology = [";
    for (std::size_t i = 1; i < cfg.topo.size(); ++i) {
        if (i > 1) os << ",";
        os << "[\"" << kind_name(cfg.topo[i].kind) << "\"," << cfg.topo[i].arity << "]";
    }
    os << "]\n";
    os << "seed = " << cfg.seed << "\n";
    os << "until = " << cfg.until << "\n";
    os << "max_priority = " << cfg.max_priority << "\n";
    if (!cfg.bindings.empty()) {
        os << "bindings = [";
        for (std::size_t i = 0; i < cfg.bindings.size(); ++i)
            os << (i ? "," : "") << cfg.bindings[i];
        os << "]\n";
    }
    os << "\n[scheduler]\n";
    os << "kind = \"" << cfg.sched.kind << "\"\n";
    os << "retry_limit = " << cfg.sched.retry_limit << "\n";
    os << "idle_repair = " << (cfg.sched.idle_repair ? "true" : "false") << "\n";
    os << "repair_cooldown = " << cfg.sched.repair_cooldown << "\n";
    os << "opportunist_mode = \"" << cfg.sched.opportunist_mode << "\"\n";
    os << "affinity = " << (cfg.sched.affinity ? "true" : "false") << "\n";
    os << "\n[cost]\n";
    os << "tick_per_work_unit = " << cfg.cost.tick_per_work_unit << "\n";
    os << "numa_factor = " << cfg.cost.numa_factor << "\n";
    os << "migration_penalty = " << cfg.cost.migration_penalty << "\n";
    os << "context_switch_cost = " << cfg.cost.context_switch_cost << "\n";
    os << "thread_quantum = " << cfg.cost.thread_quantum << "\n";
    os << "\n[scenario]\n";
    os << "name = \"" << cfg.scenario.name << "\"\n";
    const scenario_spec& sc = cfg.scenario;
    if (sc.name == "fibonacci") {
        os << "n = " << sc.fib_n << "\n";
        os << "threshold = " << sc.fib_threshold << "\n";
        os << "leaf_work = " << sc.leaf_work << "\n";
        os << "pre_work = " << sc.pre_work << "\n";
        os << "post_work = " << sc.post_work << "\n";
        os << "bubble_mode = " << (sc.bubble_mode ? "true" : "false") << "\n";
    } else if (sc.name == "conduction") {
        os << "threads = " << sc.threads << "\n";
        os << "cycles = " << sc.cycles << "\n";
        os << "work = " << sc.work << "\n";
        if (!sc.work_list.empty()) {
            os << "work_list = [";
            for (std::size_t i = 0; i < sc.work_list.size(); ++i)
                os << (i ? "," : "") << sc.work_list[i];
            os << "]\n";
        }
        os << "light_group = " << sc.light_group << "\n";
        os << "light_scale = " << sc.light_scale << "\n";
        os << "grouping = \"" << sc.grouping << "\"\n";
        os << "barrier = " << (sc.barrier ? "true" : "false") << "\n";
        os << "work_jitter = " << sc.work_jitter << "\n";
    } else if (sc.name == "gang") {
        os << "pairs = " << sc.pairs << "\n";
        os << "pair_work = " << sc.pair_work << "\n";
        os << "comm_priority = " << sc.comm_priority << "\n";
        os << "comm_work = " << sc.comm_work << "\n";
        os << "pair_slice = " << sc.pair_slice << "\n";
    }
    if (sc.burst_level != -1) os << "burst_level = " << sc.burst_level << "\n";
    if (!cfg.trace_out.empty() || !cfg.metrics_out.empty() || cfg.no_trace) {
        os << "\n[output]\n";
        if (!cfg.trace_out.empty()) os << "trace = \"" << cfg.trace_out << "\"\n";
        if (!cfg.metrics_out.empty()) os << "metrics = \"" << cfg.metrics_out << "\"\n";
        if (cfg.no_trace) os << "no_trace = true\n";
    }
    return os.str();
}

/// Instantiates the scenario described by the config on the given machine.
inline workload build_workload(const run_config& cfg, const topology& topo) {
    const scenario_spec& sc = cfg.scenario;
    workload wl;
    if (sc.name == "fibonacci") {
        fib_params p;
        p.n = sc.fib_n;
        p.threshold = sc.fib_threshold;
        p.leaf_work = sc.leaf_work;
        p.pre_work = sc.pre_work;
        p.post_work = sc.post_work;
        p.bubble_mode = sc.bubble_mode;
        p.pair_burst_level = sc.burst_level;
        wl = gen_fibonacci(p);
    } else if (sc.name == "conduction") {
        conduction_params p;
        p.threads = sc.threads;
        p.cycles = sc.cycles;
        p.work = sc.work_list.empty() ? uniform_stripes(sc.threads, sc.work) : sc.work_list;
        if (p.work.size() != sc.threads)
            throw config_error("config: work_list length does not match threads");
        if (sc.light_group >= 0) {
            // scale one NUMA group's stripes down (imbalance knob)
            std::uint32_t groups = 1;
            for (std::uint32_t l = 1; l < topo.depth(); ++l) {
                groups *= topo.levels()[l].arity;
                if (topo.levels()[l].kind == level_kind::numa) break;
            }
            std::uint32_t per = sc.threads / groups;
            std::uint32_t begin = static_cast<std::uint32_t>(sc.light_group) * per;
            if (sc.light_group >= static_cast<int>(groups))
                throw config_error("config: light_group beyond the machine's NUMA groups");
            for (std::uint32_t i = begin; i < begin + per && i < sc.threads; ++i)
                p.work[i] = static_cast<std::uint64_t>(
                    static_cast<double>(p.work[i]) * sc.light_scale);
        }
        if (sc.grouping == "flat")
            p.grouping = conduction_grouping::flat;
        else if (sc.grouping == "per_numa_pairs")
            p.grouping = conduction_grouping::per_numa_pairs;
        else
            p.grouping = conduction_grouping::per_numa;
        p.barrier = sc.barrier;
        p.work_jitter = sc.work_jitter;
        p.seed = cfg.seed;
        p.pair_burst_level = sc.burst_level;
        wl = gen_conduction(p, topo);
    } else if (sc.name == "gang") {
        gang_params p;
        p.pairs = sc.pairs;
        p.pair_work = sc.pair_work;
        p.comm_priority = sc.comm_priority;
        p.comm_work = sc.comm_work;
        p.pair_slice = sc.pair_slice;
        wl = gen_gang_demo(p);
    } else {
        throw config_error("config: unknown scenario '" + sc.name + "'");
    }
    if (!cfg.bindings.empty()) wl.bindings = cfg.bindings;
    return wl;
}

} // namespace bubblesim
