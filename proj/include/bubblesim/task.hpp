#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "program.hpp"
#include "types.hpp"

namespace bubblesim {

enum class thread_state {
    not_started, // created, not yet inserted or woken
    in_bubble,   // held by a closed or regenerating bubble
    ready,       // on exactly one runqueue
    running,     // on exactly one processor
    blocked,     // waiting on a barrier
    terminated,
};

enum class bubble_state {
    closed,       // schedulable as a unit (queued on a list or held/unwoken)
    burst,        // members released at burst_list
    regenerating, // reclaiming members back
    retired,      // every member terminated
};

/// Where a task physically is; the single source of truth checked against
/// the runqueues, processors and barriers by the conservation sweep.
struct task_position {
    enum class kind { nowhere, on_list, on_cpu, in_barrier, held };
    kind k = kind::nowhere;
    std::uint32_t where = 0; // list id / cpu id / barrier id / holder bubble id
};

struct thread_rec {
    task_id id = no_task;
    priority prio = 10;
    std::optional<task_id> parent; // enclosing bubble
    program_ref program;
    std::size_t seg = 0;            // current segment index
    std::uint64_t seg_remaining = 0; // work units left in current compute segment
    thread_state st = thread_state::not_started;
    task_position pos;
    std::optional<node_id> data_node; // first-touch home, fixed at first execution
    std::optional<cpu_id> last_cpu;
    std::uint32_t barrier = 0;     // valid when blocked
    bool reclaim_on_yield = false; // owning bubble is regenerating
    std::uint32_t ordinal = 0;     // creation order among threads (binding key)
};

struct bubble_rec {
    task_id id = no_task;
    priority prio = 5;
    std::optional<task_id> parent;
    std::vector<task_id> members; // insertion order
    std::uint32_t burst_level = 0; // level index the bubble bursts at
    sim_time slice = time_infinity;
    sim_time consumed = 0; // member execution ticks since last burst
    bubble_state st = bubble_state::closed;
    task_position pos;
    node_id home_list = no_node;  // where the holder released it; regeneration target
    node_id burst_list = no_node; // valid while burst
    std::uint32_t cur_level = 0;  // level index of the list it sits on (descent monotonicity)
    bool woken = false;

    // burst/regeneration bookkeeping
    std::vector<task_id> held_record; // members released at burst + later inserts
    std::uint32_t pending_returns = 0;
    node_id regen_target = no_node; // list to enqueue on when regeneration closes
    bool regen_for_repair = false;
    sim_time last_repair = 0; // cooldown anchor for idle repair
    std::uint32_t live_threads = 0; // transitive non-terminated threads below
};

/// Registry of all tasks of a run. Threads and bubbles share one id space.
class task_table {
public:
    bool is_bubble(task_id t) const { return std::holds_alternative<bubble_rec>(entries_.at(t)); }

    thread_rec& thread(task_id t) { return std::get<thread_rec>(entries_.at(t)); }
    const thread_rec& thread(task_id t) const { return std::get<thread_rec>(entries_.at(t)); }
    bubble_rec& bubble(task_id t) { return std::get<bubble_rec>(entries_.at(t)); }
    const bubble_rec& bubble(task_id t) const { return std::get<bubble_rec>(entries_.at(t)); }

    priority prio(task_id t) const {
        return is_bubble(t) ? bubble(t).prio : thread(t).prio;
    }
    std::optional<task_id> parent(task_id t) const {
        return is_bubble(t) ? bubble(t).parent : thread(t).parent;
    }
    task_position& pos(task_id t) {
        return is_bubble(t) ? bubble(t).pos : thread(t).pos;
    }

    std::size_t size() const { return entries_.size(); }
    std::size_t thread_count() const { return thread_count_; }

    task_id new_thread(priority p, program_ref prog) {
        task_id id = static_cast<task_id>(entries_.size());
        thread_rec th;
        th.id = id;
        th.prio = p;
        th.program = std::move(prog);
        th.ordinal = static_cast<std::uint32_t>(thread_count_++);
        entries_.emplace_back(std::move(th));
        return id;
    }

    task_id new_bubble(priority p, std::uint32_t burst_level, sim_time slice) {
        task_id id = static_cast<task_id>(entries_.size());
        bubble_rec b;
        b.id = id;
        b.prio = p;
        b.burst_level = burst_level;
        b.slice = slice;
        entries_.emplace_back(std::move(b));
        return id;
    }

    template <typename Fn>
    void for_each_bubble(Fn&& fn) const {
        for (const auto& e : entries_)
            if (auto* b = std::get_if<bubble_rec>(&e)) fn(*b);
    }

    template <typename Fn>
    void for_each_thread(Fn&& fn) const {
        for (const auto& e : entries_)
            if (auto* t = std::get_if<thread_rec>(&e)) fn(*t);
    }

    /// True when `descendant` is reachable from `ancestor` via member edges.
    bool reaches(task_id ancestor, task_id descendant) const {
        if (ancestor == descendant) return true;
        if (!is_bubble(ancestor)) return false;
        for (task_id m : bubble(ancestor).members)
            if (reaches(m, descendant)) return true;
        return false;
    }

private:
    std::vector<std::variant<thread_rec, bubble_rec>> entries_;
    std::size_t thread_count_ = 0;
};

} // namespace bubblesim
