#pragma once

#include <algorithm>
#include <vector>

#include "sched.hpp"

namespace bubblesim {

/// Greedy self-scheduling comparators. Bubble structure is ignored: member
/// threads are flattened out at spawn and only thread lists are used.
///
/// Two list models:
///  - per-cpu lists with work stealing and least-loaded placement (the
///    affinity-scheduling family), the default;
///  - one global ready list the processors pop FIFO (the classic
///    single-list self-scheduler), selected with global_list = true. This is
///    the affinity-blind "simple" scheduler of the conduction comparison.
class opportunist_scheduler final : public scheduler_policy {
public:
    struct options {
        bool global_list = false;
        bool affinity = true; // prefer last_cpu when its load is within 1 of minimum
    };

    explicit opportunist_scheduler(machine_state& m) : scheduler_policy(m) {}
    opportunist_scheduler(machine_state& m, options opt) : scheduler_policy(m), opt_(opt) {}

    std::string_view name() const override { return "opportunist"; }

    task_id pick(cpu_id cpu, sim_time now) override {
        if (opt_.global_list) {
            auto& rq = m_.rq(m_.topo().root());
            if (rq.empty()) return no_task;
            task_id t = rq.head();
            m_.detach(t);
            return t;
        }
        auto& own = m_.rq(m_.topo().leaf_node(cpu));
        if (!own.empty()) {
            task_id t = own.head();
            m_.detach(t);
            return t;
        }
        // Steal one thread from the most loaded per-cpu list.
        cpu_id victim = no_cpu;
        std::size_t most = 0;
        for (cpu_id c = 0; c < m_.topo().num_cpus(); ++c) {
            std::size_t load = m_.rq(m_.topo().leaf_node(c)).size();
            if (load > most) {
                most = load;
                victim = c;
            }
        }
        if (victim == no_cpu) return no_task;
        auto [prio, t] = m_.rq(m_.topo().leaf_node(victim)).coldest();
        (void)prio;
        m_.detach(t);
        ++m_.counters().steals;
        m_.trace().emit({now, cpu, trace_kind::steal, t, m_.topo().leaf_node(victim),
                         {{"victim_cpu", victim}}});
        return t;
    }

    node_id place_runnable(task_id tid, sim_time) override {
        node_id list = opt_.global_list ? m_.topo().root() : place_list(tid);
        m_.enqueue(tid, list);
        return list;
    }

    void admit(const task_proto& proto, task_id, sim_time now) override {
        flatten(proto, now);
    }

    bool steals_across_lists() const override { return !opt_.global_list; }

    /// Placement rule: least-loaded list, ties to the lowest cpu id; a thread
    /// that ran before sticks to its last processor while that list's load is
    /// within 1 of the minimum.
    node_id place_list(task_id tid) const {
        const thread_rec& th = m_.tasks().thread(tid);
        cpu_id best = 0;
        std::size_t best_load = m_.rq(m_.topo().leaf_node(0)).size();
        for (cpu_id c = 1; c < m_.topo().num_cpus(); ++c) {
            std::size_t load = m_.rq(m_.topo().leaf_node(c)).size();
            if (load < best_load) {
                best_load = load;
                best = c;
            }
        }
        if (opt_.affinity && th.last_cpu) {
            std::size_t last_load = m_.rq(m_.topo().leaf_node(*th.last_cpu)).size();
            if (last_load <= best_load + 1) return m_.topo().leaf_node(*th.last_cpu);
        }
        return m_.topo().leaf_node(best);
    }

private:
    void flatten(const task_proto& proto, sim_time now) {
        if (proto.bubble) {
            for (const auto& mp : proto.members) flatten(mp, now);
            return;
        }
        task_id t = m_.create_thread_dontsched(resolve_prio(proto), proto.program);
        place_runnable(t, now);
    }

    options opt_;
};

/// Statically bound comparator: each thread is pinned to one processor for
/// the whole run, stealing disabled. The non-portable performance ceiling.
class bound_scheduler final : public scheduler_policy {
public:
    bound_scheduler(machine_state& m, std::vector<cpu_id> bindings)
        : scheduler_policy(m), bindings_(std::move(bindings)) {}

    std::string_view name() const override { return "bound"; }

    task_id pick(cpu_id cpu, sim_time) override {
        auto& own = m_.rq(m_.topo().leaf_node(cpu));
        if (own.empty()) return no_task;
        task_id t = own.head();
        m_.detach(t);
        return t;
    }

    node_id place_runnable(task_id tid, sim_time) override {
        node_id list = m_.topo().leaf_node(bound_cpu(tid));
        m_.enqueue(tid, list);
        return list;
    }

    void admit(const task_proto& proto, task_id, sim_time now) override {
        if (proto.bubble) {
            for (const auto& mp : proto.members) admit(mp, no_task, now);
            return;
        }
        task_id t = m_.create_thread_dontsched(resolve_prio(proto), proto.program);
        place_runnable(t, now);
    }

    cpu_id bound_cpu(task_id tid) const {
        std::uint32_t ord = m_.tasks().thread(tid).ordinal;
        if (ord >= bindings_.size())
            throw config_error("bound scheduler: thread " + std::to_string(ord) +
                               " has no binding");
        cpu_id c = bindings_[ord];
        if (c >= m_.topo().num_cpus())
            throw config_error("binding for thread " + std::to_string(ord) +
                               " names cpu " + std::to_string(c) + " beyond the machine");
        return c;
    }

private:
    std::vector<cpu_id> bindings_;
};

} // namespace bubblesim
