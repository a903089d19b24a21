#pragma once

#include <functional>
#include <string>
#include <vector>

#include "runqueue.hpp"
#include "task.hpp"
#include "topology.hpp"
#include "trace.hpp"

namespace bubblesim {

struct sched_counters {
    std::uint64_t bursts = 0;
    std::uint64_t regenerations = 0;
    std::uint64_t hoists = 0;
    std::uint64_t steals = 0;
    std::uint64_t retries = 0;
    std::uint64_t migrations = 0;
    std::uint64_t list_inspections = 0;
    std::uint64_t lookups = 0;
    std::uint64_t max_inspections_per_lookup = 0;
};

/// Mutable run state shared by the scheduler policies and the event loop:
/// one runqueue per topology node, the task registry, trace and counters.
/// Single-writer: only the simulation loop mutates it.
class machine_state {
public:
    explicit machine_state(topology topo, priority max_prio = 100)
        : topo_(std::move(topo)), max_priority_(max_prio) {
        rqs_.reserve(topo_.num_nodes());
        for (node_id n = 0; n < topo_.num_nodes(); ++n) rqs_.emplace_back(n);
        busy_ticks.assign(topo_.num_cpus(), 0);
        remote_ticks.assign(topo_.num_cpus(), 0);
    }

    const topology& topo() const { return topo_; }
    runqueue& rq(node_id n) { return rqs_.at(n); }
    const runqueue& rq(node_id n) const { return rqs_.at(n); }
    task_table& tasks() { return tasks_; }
    const task_table& tasks() const { return tasks_; }
    trace_log& trace() { return trace_; }
    lock_auditor& locks() { return locks_; }
    sched_counters& counters() { return counters_; }
    const sched_counters& counters() const { return counters_; }

    priority max_priority() const { return max_priority_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    void warn(std::string msg) { warnings_.push_back(std::move(msg)); }

    /// Notifies the event loop that a list gained a task (used to wake
    /// sleeping processors covered by it).
    std::function<void(node_id)> on_enqueue;

    std::uint64_t progress = 0; // bumped on every state transition (livelock guard)

    // Threads currently ready or running anywhere; "released live threads"
    // for the gang property on bubble bursts.
    std::uint32_t ready_threads = 0;
    std::uint32_t running_threads = 0;
    std::uint32_t live_threads = 0; // created and not yet terminated

    std::vector<std::uint64_t> busy_ticks;   // per cpu, includes switch costs
    std::vector<std::uint64_t> remote_ticks; // per cpu, execution at remote rate
    std::uint64_t executed_work = 0;
    sim_time last_termination = 0;

    // ---- task construction (the bubble-building interface) ----

    task_id create_thread_dontsched(priority p, program_ref prog) {
        task_id id = tasks_.new_thread(clamp_prio(p, "thread"), std::move(prog));
        ++live_threads;
        return id;
    }

    task_id bubble_init(priority p, std::uint32_t burst_level, sim_time slice) {
        if (slice == 0) throw config_error("bubble time slice must be positive");
        return tasks_.new_bubble(clamp_prio(p, "bubble"), burst_level, slice);
    }

    void bubble_insert_task(task_id bubble, task_id member) {
        bubble_rec& b = tasks_.bubble(bubble);
        if (tasks_.parent(member))
            throw config_error("task " + std::to_string(member) + " already has a holder");
        if (tasks_.is_bubble(member) && tasks_.reaches(member, bubble))
            throw config_error("inserting bubble " + std::to_string(member) +
                               " would form a membership cycle");
        b.members.push_back(member);
        std::uint32_t added;
        if (tasks_.is_bubble(member)) {
            tasks_.bubble(member).parent = bubble;
            added = tasks_.bubble(member).live_threads;
        } else {
            thread_rec& th = tasks_.thread(member);
            th.parent = bubble;
            if (th.st != thread_state::terminated) th.st = thread_state::in_bubble;
            added = th.st == thread_state::terminated ? 0 : 1;
        }
        add_live(bubble, added);
        if (b.st == bubble_state::burst) {
            // Insertion after the bubble woke up and burst: the member joins
            // the released set on the recorded burst list right away.
            b.held_record.push_back(member);
            release_member(member, b.burst_list);
        } else {
            hold(member, bubble);
        }
        ++progress;
    }

    void wake_up_bubble(task_id bubble) {
        bubble_rec& b = tasks_.bubble(bubble);
        if (b.parent)
            throw config_error("only outermost bubbles can be woken explicitly");
        if (b.woken || b.pos.k != task_position::kind::nowhere)
            throw config_error("bubble " + std::to_string(bubble) + " already woken");
        if (b.burst_level >= topo_.depth())
            throw config_error("bubble burst level " + std::to_string(b.burst_level) +
                               " is deeper than the machine (depth " +
                               std::to_string(topo_.depth()) + ")");
        b.woken = true;
        b.home_list = topo_.root();
        enqueue(bubble, topo_.root());
    }

    // ---- list transitions ----

    /// Appends a task at the tail of a list. Threads become ready, bubbles
    /// closed-on-list.
    void enqueue(task_id t, node_id list) {
        task_position& p = tasks_.pos(t);
        require(p.k == task_position::kind::nowhere || p.k == task_position::kind::held,
                "enqueue: task already placed");
        if (tasks_.is_bubble(t)) {
            bubble_rec& b = tasks_.bubble(t);
            require(b.st == bubble_state::closed, "enqueue: bubble not closed");
            b.cur_level = topo_.node(list).level;
        } else {
            thread_rec& th = tasks_.thread(t);
            require(th.st != thread_state::terminated, "enqueue: terminated thread");
            th.st = thread_state::ready;
            ++ready_threads;
        }
        p = {task_position::kind::on_list, list};
        rqs_[list].push_tail(tasks_.prio(t), t);
        ++progress;
        if (on_enqueue) on_enqueue(list);
    }

    /// Removes a task from the list it sits on (position goes to nowhere).
    void detach(task_id t) {
        task_position& p = tasks_.pos(t);
        require(p.k == task_position::kind::on_list, "detach: task not on a list");
        bool ok = rqs_[p.where].remove(tasks_.prio(t), t);
        require(ok, "detach: task missing from its list");
        if (!tasks_.is_bubble(t)) --ready_threads;
        p = {task_position::kind::nowhere, 0};
        ++progress;
    }

    /// Releases one member of a bursting bubble onto the burst list.
    void release_member(task_id m, node_id list) {
        task_position& p = tasks_.pos(m);
        require(p.k == task_position::kind::held || p.k == task_position::kind::nowhere,
                "release: member not held");
        p = {task_position::kind::nowhere, 0};
        if (tasks_.is_bubble(m)) {
            bubble_rec& sub = tasks_.bubble(m);
            sub.st = bubble_state::closed;
            sub.home_list = list; // released here by the holder: regeneration target
        }
        enqueue(m, list);
    }

    void hold(task_id m, task_id holder) {
        task_position& p = tasks_.pos(m);
        require(p.k == task_position::kind::nowhere || p.k == task_position::kind::held,
                "hold: member is placed elsewhere");
        p = {task_position::kind::held, holder};
        if (!tasks_.is_bubble(m)) {
            thread_rec& th = tasks_.thread(m);
            if (th.st != thread_state::terminated) th.st = thread_state::in_bubble;
        }
        ++progress;
    }

    void add_live(task_id bubble, std::uint32_t n) {
        if (n == 0) return;
        std::optional<task_id> cur = bubble;
        while (cur) {
            tasks_.bubble(*cur).live_threads += n;
            cur = tasks_.bubble(*cur).parent;
        }
    }

    void drop_live(task_id bubble, std::uint32_t n) {
        if (n == 0) return;
        std::optional<task_id> cur = bubble;
        while (cur) {
            bubble_rec& b = tasks_.bubble(*cur);
            require(b.live_threads >= n, "live thread count underflow");
            b.live_threads -= n;
            cur = b.parent;
        }
    }

    /// Conservation sweep: every non-terminated task is in exactly one place
    /// and the place agrees with the task's own state. O(tasks + lists).
    void validate() const {
        std::vector<int> found(tasks_.size(), 0);
        for (const auto& rq : rqs_)
            rq.for_each([&](priority, task_id t) { ++found[t]; });

        for (task_id t = 0; t < tasks_.size(); ++t) {
            const task_position* p;
            bool on_list_expected, gone;
            if (tasks_.is_bubble(t)) {
                const bubble_rec& b = tasks_.bubble(t);
                p = &b.pos;
                gone = b.st == bubble_state::retired;
                on_list_expected = b.st == bubble_state::closed &&
                                   p->k == task_position::kind::on_list;
            } else {
                const thread_rec& th = tasks_.thread(t);
                p = &th.pos;
                gone = th.st == thread_state::terminated;
                on_list_expected = th.st == thread_state::ready;
                if (th.st == thread_state::ready)
                    require(p->k == task_position::kind::on_list,
                            "ready thread not on a list");
                if (th.st == thread_state::running)
                    require(p->k == task_position::kind::on_cpu,
                            "running thread not on a cpu");
                if (th.st == thread_state::blocked)
                    require(p->k == task_position::kind::in_barrier,
                            "blocked thread not in a barrier");
                if (th.st == thread_state::in_bubble)
                    require(p->k == task_position::kind::held, "held thread misplaced");
            }
            if (gone) {
                require(found[t] == 0, "terminated task still queued");
                continue;
            }
            require(found[t] == (on_list_expected ? 1 : 0),
                    "task " + std::to_string(t) + " queued " + std::to_string(found[t]) +
                        " times, expected " + std::to_string(on_list_expected ? 1 : 0));
            if (p->k == task_position::kind::held) {
                const bubble_rec& holder = tasks_.bubble(p->where);
                require(holder.st != bubble_state::retired, "task held by retired bubble");
            }
        }

        // a closed bubble has no member on any runqueue or processor
        for (task_id t = 0; t < tasks_.size(); ++t) {
            if (!tasks_.is_bubble(t)) continue;
            const bubble_rec& b = tasks_.bubble(t);
            if (b.st != bubble_state::closed) continue;
            for (task_id mid : b.members) {
                if (tasks_.is_bubble(mid)) continue;
                const thread_rec& th = tasks_.thread(mid);
                require(th.st != thread_state::ready && th.st != thread_state::running,
                        "closed bubble with a released member");
            }
        }
    }

private:
    priority clamp_prio(priority p, const char* what) {
        if (p > max_priority_) {
            warn(std::string(what) + " priority " + std::to_string(p) +
                 " clamped to max " + std::to_string(max_priority_));
            return max_priority_;
        }
        if (p < 0) {
            warn(std::string(what) + " priority " + std::to_string(p) + " clamped to 0");
            return 0;
        }
        return p;
    }

    topology topo_;
    std::vector<runqueue> rqs_;
    task_table tasks_;
    trace_log trace_;
    lock_auditor locks_;
    sched_counters counters_;
    std::vector<std::string> warnings_;
    priority max_priority_;
};

} // namespace bubblesim
