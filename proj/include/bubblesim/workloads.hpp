#pragma once

#include <random>
#include <string>
#include <vector>

#include "program.hpp"
#include "topology.hpp"

namespace bubblesim {

// ---- recursive thread creation (divide and conquer) ----

struct fib_params {
    int n = 10;
    int threshold = 2;        // calls at or below this level run sequentially
    std::uint64_t leaf_work = 40; // work units per remaining call in a leaf
    std::uint64_t pre_work = 2;   // before spawning children
    std::uint64_t post_work = 8;  // combining after the join
    bool bubble_mode = true;      // wrap each spawned pair in a bubble
    int pair_burst_level = -1;    // child-pair bubbles burst here; -1 = deepest
};

/// Number of calls in the call tree of fib(k).
inline std::uint64_t fib_calls(int k) {
    if (k < 2) return 1;
    return 1 + fib_calls(k - 1) + fib_calls(k - 2);
}

/// Threads the scenario creates for fib(k) with the given threshold.
inline std::uint64_t fib_thread_count(int k, int threshold) {
    if (k <= threshold) return 1;
    return 1 + fib_thread_count(k - 1, threshold) + fib_thread_count(k - 2, threshold);
}

namespace detail {

inline task_proto fib_node(const fib_params& p, int k, int parent_join, workload& wl) {
    work_program segs;
    if (k > p.threshold) {
        std::uint32_t join = static_cast<std::uint32_t>(wl.barrier_parties.size());
        wl.barrier_parties.push_back(3); // this call and its two children
        if (p.pre_work) segs.push_back(segment::compute(p.pre_work));
        task_proto left = fib_node(p, k - 1, static_cast<int>(join), wl);
        task_proto right = fib_node(p, k - 2, static_cast<int>(join), wl);
        std::vector<task_proto> spawned;
        if (p.bubble_mode) {
            spawned.push_back(task_proto::make_bubble({std::move(left), std::move(right)},
                                                      p.pair_burst_level));
        } else {
            spawned.push_back(std::move(left));
            spawned.push_back(std::move(right));
        }
        segs.push_back(segment::spawn(std::move(spawned)));
        segs.push_back(segment::barrier_wait(join));
        if (p.post_work) segs.push_back(segment::compute(p.post_work));
    } else {
        segs.push_back(segment::compute(p.leaf_work * fib_calls(k)));
    }
    if (parent_join >= 0)
        segs.push_back(segment::barrier_wait(static_cast<std::uint32_t>(parent_join)));
    return task_proto::thread(make_program(std::move(segs)));
}

} // namespace detail

inline workload gen_fibonacci(const fib_params& p) {
    if (p.n < 0 || p.threshold < 1)
        throw config_error("fibonacci: need n >= 0 and threshold >= 1");
    workload wl;
    task_proto root = detail::fib_node(p, p.n, -1, wl);
    if (p.bubble_mode)
        wl.roots.push_back(task_proto::make_bubble({std::move(root)}, /*burst_level=*/0));
    else
        wl.roots.push_back(std::move(root));
    return wl;
}

// ---- conduction stripes: compute/barrier cycles ----

enum class conduction_grouping {
    flat,           // bare threads, no affinity structure
    per_numa,       // one bubble per NUMA group inside one outer bubble
    per_numa_pairs, // NUMA bubbles holding pair bubbles that burst at the leaves
};

struct conduction_params {
    std::uint32_t threads = 16;
    std::uint32_t cycles = 50;
    std::vector<std::uint64_t> work; // per thread and cycle; size == threads
    conduction_grouping grouping = conduction_grouping::per_numa;
    bool barrier = true;
    std::uint64_t work_jitter = 0; // +/- uniform draw added per thread (seeded)
    std::uint64_t seed = 1;
    int pair_burst_level = -1; // pair bubbles burst here; -1 = deepest
};

inline std::vector<std::uint64_t> uniform_stripes(std::uint32_t threads, std::uint64_t w) {
    return std::vector<std::uint64_t>(threads, w);
}

inline workload gen_conduction(const conduction_params& p, const topology& topo) {
    if (p.work.size() != p.threads)
        throw config_error("conduction: work list length " + std::to_string(p.work.size()) +
                           " != threads " + std::to_string(p.threads));
    workload wl;
    std::vector<std::uint64_t> work = p.work;
    if (p.work_jitter) {
        std::mt19937_64 rng(p.seed);
        std::uniform_int_distribution<std::uint64_t> d(0, 2 * p.work_jitter);
        for (auto& w : work) w = w + d(rng) - std::min(w, p.work_jitter);
    }
    std::uint32_t global_barrier = 0;
    if (p.barrier) wl.barrier_parties.push_back(p.threads);

    std::vector<task_proto> threads;
    threads.reserve(p.threads);
    for (std::uint32_t i = 0; i < p.threads; ++i) {
        work_program segs;
        for (std::uint32_t c = 0; c < p.cycles; ++c) {
            segs.push_back(segment::compute(work[i]));
            if (p.barrier) segs.push_back(segment::barrier_wait(global_barrier));
        }
        threads.push_back(task_proto::thread(make_program(std::move(segs))));
    }

    // identity binding: stripe i on processor i (bound comparator)
    for (std::uint32_t i = 0; i < p.threads; ++i)
        wl.bindings.push_back(i % topo.num_cpus());

    if (p.grouping == conduction_grouping::flat) {
        wl.roots = std::move(threads);
        return wl;
    }

    int numa_level = -1;
    for (std::uint32_t l = 0; l < topo.depth(); ++l)
        if (topo.levels()[l].kind == level_kind::numa) numa_level = static_cast<int>(l);
    std::uint32_t groups = 1;
    if (numa_level > 0) {
        groups = 1;
        for (int l = 1; l <= numa_level; ++l) groups *= topo.levels()[l].arity;
    }

    std::vector<task_proto> group_bubbles;
    std::uint32_t base = p.threads / groups, extra = p.threads % groups;
    std::size_t next = 0;
    for (std::uint32_t g = 0; g < groups; ++g) {
        std::uint32_t take = base + (g < extra ? 1 : 0);
        std::vector<task_proto> members;
        if (p.grouping == conduction_grouping::per_numa_pairs) {
            for (std::uint32_t i = 0; i < take; i += 2) {
                std::vector<task_proto> pair;
                pair.push_back(std::move(threads[next++]));
                if (i + 1 < take) pair.push_back(std::move(threads[next++]));
                members.push_back(
                    task_proto::make_bubble(std::move(pair), p.pair_burst_level));
            }
        } else {
            for (std::uint32_t i = 0; i < take; ++i)
                members.push_back(std::move(threads[next++]));
        }
        group_bubbles.push_back(task_proto::make_bubble(
            std::move(members), numa_level > 0 ? numa_level : 0));
    }
    wl.roots.push_back(task_proto::make_bubble(std::move(group_bubbles), /*root*/ 0));
    return wl;
}

// ---- gang demo: prioritized pairs plus one communication thread ----

struct gang_params {
    std::uint32_t pairs = 4;
    std::uint64_t pair_work = 500;
    priority comm_priority = 20;
    std::uint64_t comm_work = 4000;
    sim_time pair_slice = 200;
};

inline workload gen_gang_demo(const gang_params& p) {
    if (p.pairs < 2) throw config_error("gang demo: need at least 2 pairs");
    workload wl;
    std::vector<task_proto> members;
    members.push_back(task_proto::thread(
        make_program({segment::compute(p.comm_work)}), p.comm_priority));
    for (std::uint32_t i = 0; i < p.pairs; ++i) {
        std::vector<task_proto> pair;
        for (int j = 0; j < 2; ++j)
            pair.push_back(task_proto::thread(make_program({segment::compute(p.pair_work)})));
        members.push_back(
            task_proto::make_bubble(std::move(pair), /*root*/ 0, p.pair_slice));
    }
    wl.roots.push_back(task_proto::make_bubble(std::move(members), /*root*/ 0));
    return wl;
}

} // namespace bubblesim
