#pragma once

#include <string_view>
#include <variant>

#include "program.hpp"
#include "world.hpp"

namespace bubblesim {

inline constexpr priority default_thread_priority = 10;
inline constexpr priority default_bubble_priority = 5;

// ---- scheduling decisions ----

struct run_thread {
    task_id thread;
};
struct moved_bubble {
    task_id bubble;
    node_id from;
    node_id to;
};
struct burst_bubble {
    task_id bubble;
    node_id at;
};
struct idle_decision {};

using sched_decision = std::variant<run_thread, moved_bubble, burst_bubble, idle_decision>;

inline bool is_idle(const sched_decision& d) {
    return std::holds_alternative<idle_decision>(d);
}

/// Scheduler policy driven by the simulation loop. All three schedulers
/// (bubble, opportunist, bound) sit behind this surface so runs differ only
/// in policy.
class scheduler_policy {
public:
    explicit scheduler_policy(machine_state& m) : m_(m) {}
    virtual ~scheduler_policy() = default;

    virtual std::string_view name() const = 0;

    /// Selects and dequeues the next thread for `cpu`; no_task when idle.
    virtual task_id pick(cpu_id cpu, sim_time now) = 0;

    /// Re-places a runnable thread (preemption requeue, barrier release).
    /// Returns the list it was enqueued on.
    virtual node_id place_runnable(task_id th, sim_time now) = 0;

    /// Builds the tasks described by `proto` and makes them schedulable.
    /// `spawner` is the creating thread, or no_task for load-time roots.
    virtual void admit(const task_proto& proto, task_id spawner, sim_time now) = 0;

    /// Thread reached a scheduling point while its bubble wants it back.
    /// Returns true when the thread was absorbed instead of re-queued.
    virtual bool reclaim_if_needed(task_id, sim_time) { return false; }

    virtual void charge_slice(task_id, sim_time, sim_time) {}
    virtual void on_terminated(task_id, sim_time) {}

    /// True when idle processors may take work from lists they are not
    /// covered by (drives processor wake-up broadcasting).
    virtual bool steals_across_lists() const { return false; }

protected:
    priority resolve_prio(const task_proto& p) const {
        if (p.prio >= 0) return p.prio;
        return p.bubble ? default_bubble_priority : default_thread_priority;
    }

    machine_state& m_;
};

} // namespace bubblesim
