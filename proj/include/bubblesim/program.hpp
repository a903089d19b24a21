#pragma once

#include <memory>
#include <vector>

#include "types.hpp"

namespace bubblesim {

struct task_proto;

/// One step of a thread's work program.
struct segment {
    enum class op { compute, spawn, barrier_wait, terminate };

    op kind = op::terminate;
    std::uint64_t work = 0;           // compute
    std::uint32_t barrier = 0;        // barrier_wait
    std::vector<task_proto> children; // spawn

    static segment compute(std::uint64_t units) { return {op::compute, units, 0, {}}; }
    static segment barrier_wait(std::uint32_t id) { return {op::barrier_wait, 0, id, {}}; }
    static segment terminate() { return {op::terminate, 0, 0, {}}; }
    static segment spawn(std::vector<task_proto> protos);
};

/// A thread's program: ordered segments ending with terminate.
using work_program = std::vector<segment>;
using program_ref = std::shared_ptr<const work_program>;

/// Blueprint for a task created at load time or by a spawn segment: either a
/// thread with a program or a bubble holding nested protos.
struct task_proto {
    bool bubble = false;
    priority prio = -1; // -1 = default for the kind (threads 10, bubbles 5)

    // thread
    program_ref program;

    // bubble
    int burst_level = -1; // level index to burst at; -1 = deepest level
    sim_time slice = time_infinity;
    std::vector<task_proto> members;

    static task_proto thread(program_ref prog, priority p = -1) {
        task_proto t;
        t.prio = p;
        t.program = std::move(prog);
        return t;
    }

    static task_proto make_bubble(std::vector<task_proto> members, int burst_level = -1,
                                  sim_time slice = time_infinity, priority p = -1) {
        task_proto b;
        b.bubble = true;
        b.prio = p;
        b.burst_level = burst_level;
        b.slice = slice;
        b.members = std::move(members);
        return b;
    }
};

inline segment segment::spawn(std::vector<task_proto> protos) {
    segment s;
    s.kind = op::spawn;
    s.children = std::move(protos);
    return s;
}

inline program_ref make_program(work_program segs) {
    if (segs.empty() || segs.back().kind != segment::op::terminate)
        segs.push_back(segment::terminate());
    return std::make_shared<const work_program>(std::move(segs));
}

/// Total declared compute units in a proto tree, including work spawned at
/// runtime. Independent of any scheduler; used for conservation checks and
/// the sequential reference time.
inline std::uint64_t total_declared_work(const task_proto& proto) {
    std::uint64_t sum = 0;
    if (proto.bubble) {
        for (const auto& m : proto.members) sum += total_declared_work(m);
        return sum;
    }
    if (!proto.program) return 0;
    for (const auto& seg : *proto.program) {
        if (seg.kind == segment::op::compute) sum += seg.work;
        if (seg.kind == segment::op::spawn)
            for (const auto& c : seg.children) sum += total_declared_work(c);
    }
    return sum;
}

/// A generated scenario ready to run: root tasks, barrier table, and the
/// static thread-to-processor map for the bound scheduler.
struct workload {
    std::vector<task_proto> roots;
    std::vector<std::uint32_t> barrier_parties;
    std::vector<cpu_id> bindings; // by thread creation order; empty = none

    std::uint64_t total_work() const {
        std::uint64_t sum = 0;
        for (const auto& r : roots) sum += total_declared_work(r);
        return sum;
    }
};

/// Threads a proto tree will eventually create (spawns included).
inline std::uint64_t total_declared_threads(const task_proto& proto) {
    std::uint64_t n = 0;
    if (proto.bubble) {
        for (const auto& m : proto.members) n += total_declared_threads(m);
        return n;
    }
    n = 1;
    if (proto.program)
        for (const auto& seg : *proto.program)
            if (seg.kind == segment::op::spawn)
                for (const auto& c : seg.children) n += total_declared_threads(c);
    return n;
}

} // namespace bubblesim
