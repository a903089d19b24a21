#pragma once

#include <algorithm>
#include <memory>
#include <queue>
#include <tuple>
#include <utility>
#include <vector>

#include "baseline_sched.hpp"
#include "bubble_sched.hpp"
#include "metrics.hpp"
#include "program.hpp"
#include "sched.hpp"
#include "world.hpp"

namespace bubblesim {

enum class event_kind { quantum_end, thread_term, slice_expiry, wakeup, barrier_release };

struct sim_event {
    sim_time time = 0;
    std::uint64_t seq = 0; // assigned at insertion; total order tie-break
    event_kind kind = event_kind::wakeup;
    task_id task = no_task;
    cpu_id cpu = no_cpu;
    std::uint32_t barrier = 0;
    bool poll = false;
};

struct barrier_state {
    std::uint32_t parties = 0;
    std::uint32_t arrived = 0;
    std::vector<task_id> waiters;
    std::uint64_t releases = 0;
};

struct sim_options {
    cost_model cost;
    sim_time until = time_infinity;
    std::uint64_t livelock_budget = 500000;
    bool validate_each_event = false; // conservation sweep after every event
};

/// Deterministic discrete-event engine: simulated processors draw work from
/// the configured scheduler at every scheduling point (quantum end, block,
/// termination, idle wake-up) and execution cost follows the cost model.
class simulation {
public:
    simulation(topology topo, sim_options opt = {})
        : m_(std::move(topo)), opt_(opt) {
        opt_.cost.validate();
        procs_.resize(m_.topo().num_cpus());
        m_.on_enqueue = [this](node_id list) { wake_covered(list); };
    }

    machine_state& machine() { return m_; }
    const machine_state& machine() const { return m_; }
    scheduler_policy& policy() { return *pol_; }
    sim_time now() const { return clock_; }
    const sim_options& options() const { return opt_; }

    bubble_scheduler& use_bubble_scheduler(bubble_scheduler::options o = bubble_scheduler::options{}) {
        auto p = std::make_unique<bubble_scheduler>(m_, o);
        auto* raw = p.get();
        pol_ = std::move(p);
        return *raw;
    }
    opportunist_scheduler& use_opportunist(opportunist_scheduler::options o = opportunist_scheduler::options{}) {
        auto p = std::make_unique<opportunist_scheduler>(m_, o);
        auto* raw = p.get();
        pol_ = std::move(p);
        return *raw;
    }
    bound_scheduler& use_bound(std::vector<cpu_id> bindings) {
        auto p = std::make_unique<bound_scheduler>(m_, std::move(bindings));
        auto* raw = p.get();
        pol_ = std::move(p);
        return *raw;
    }

    void load(const workload& wl) {
        require(pol_ != nullptr, "load: no scheduler configured");
        require(!loaded_, "load: workload already loaded");
        loaded_ = true;
        declared_work_ = wl.total_work();
        barriers_.clear();
        for (auto parties : wl.barrier_parties) barriers_.push_back({parties, 0, {}, 0});
        for (const auto& root : wl.roots) pol_->admit(root, no_task, 0);
        for (cpu_id c = 0; c < m_.topo().num_cpus(); ++c) push_event(0, {.kind = event_kind::wakeup, .cpu = c});
    }

    /// Runs to completion (or `until`) and returns the aggregate metrics.
    metrics run() {
        require(loaded_, "run: no workload loaded");
        std::uint64_t last_progress = m_.progress;
        std::uint64_t stall = 0;
        bool complete = m_.live_threads == 0;
        while (!complete && !events_.empty()) {
            sim_event ev = pop_event();
            if (ev.time > opt_.until) {
                clock_ = opt_.until;
                break;
            }
            require(ev.time >= clock_, "event time went backwards");
            clock_ = ev.time;
            handle(ev);
            if (opt_.validate_each_event) m_.validate();
            complete = m_.live_threads == 0;
            if (m_.progress == last_progress) {
                if (++stall > opt_.livelock_budget)
                    throw sim_abort("livelock: " + std::to_string(stall) +
                                    " events with no state change at t=" +
                                    std::to_string(clock_));
            } else {
                last_progress = m_.progress;
                stall = 0;
            }
        }
        if (!complete && events_.empty() && m_.live_threads > 0)
            throw sim_abort("deadlock: " + std::to_string(m_.live_threads) +
                            " live threads but no pending events");

        sim_time makespan = complete ? m_.last_termination : clock_;
        flush_idle_records(makespan);
        if (complete && opt_.until == time_infinity)
            require(m_.executed_work == declared_work_,
                    "work conservation: executed " + std::to_string(m_.executed_work) +
                        " of " + std::to_string(declared_work_));

        metrics mt;
        mt.makespan = makespan;
        mt.busy = m_.busy_ticks;
        mt.remote = m_.remote_ticks;
        mt.migrations = m_.counters().migrations;
        mt.bursts = m_.counters().bursts;
        mt.regenerations = m_.counters().regenerations;
        mt.hoists = m_.counters().hoists;
        mt.steals = m_.counters().steals;
        mt.retries = m_.counters().retries;
        mt.list_inspections = m_.counters().list_inspections;
        mt.finish(sequential_ticks());
        return mt;
    }

    std::uint64_t sequential_ticks() const {
        return declared_work_ * opt_.cost.tick_per_work_unit;
    }
    std::uint64_t declared_work() const { return declared_work_; }
    const barrier_state& barrier(std::uint32_t id) const { return barriers_.at(id); }
    bool completed() const { return m_.live_threads == 0; }

    /// Test hook: pass-through to the bubble scheduler's interference
    /// injection (forces the lookup revalidation to fail).
    void inject_interference(std::uint64_t lookup, node_id victim) {
        auto* b = dynamic_cast<bubble_scheduler*>(pol_.get());
        require(b != nullptr, "interference injection needs the bubble scheduler");
        b->inject_interference(lookup, victim);
    }

private:
    struct proc_state {
        task_id current = no_task;
        bool sleeping = false;
        bool wake_pending = false;
        bool poll_armed = false;
        sim_time sleep_since = 0;
        std::uint64_t sleep_seq = 0; // most recent sleepers are woken first
        sim_time run_ticks = 0;
    };

    struct event_order {
        bool operator()(const sim_event& a, const sim_event& b) const {
            if (a.time != b.time) return a.time > b.time;
            return a.seq > b.seq;
        }
    };

    void push_event(sim_time t, sim_event ev) {
        ev.time = t;
        ev.seq = seq_++;
        events_.push(std::move(ev));
    }

    sim_event pop_event() {
        sim_event ev = events_.top();
        events_.pop();
        return ev;
    }

    void handle(const sim_event& ev) {
        switch (ev.kind) {
        case event_kind::quantum_end:
        case event_kind::thread_term:
        case event_kind::slice_expiry:
            on_yield(ev);
            break;
        case event_kind::wakeup:
            on_wakeup(ev);
            break;
        case event_kind::barrier_release:
            on_barrier_release(ev.barrier);
            break;
        }
    }

    void wake_covered(node_id list) {
        cpu_id first = 0;
        std::uint32_t count = static_cast<std::uint32_t>(procs_.size());
        if (!pol_ || !pol_->steals_across_lists())
            std::tie(first, count) = m_.topo().cpu_span(list);
        // LIFO wake order: the most recently idled processor goes first
        std::vector<cpu_id> sleepers;
        for (cpu_id c = first; c < first + count; ++c)
            if (procs_[c].sleeping && !procs_[c].wake_pending) sleepers.push_back(c);
        std::sort(sleepers.begin(), sleepers.end(), [&](cpu_id a, cpu_id b) {
            return procs_[a].sleep_seq > procs_[b].sleep_seq;
        });
        for (cpu_id c : sleepers) wake(c);
    }

    void wake(cpu_id c) {
        proc_state& p = procs_[c];
        if (!p.sleeping || p.wake_pending) return;
        p.wake_pending = true;
        push_event(clock_, {.kind = event_kind::wakeup, .cpu = c});
    }

    void on_wakeup(const sim_event& ev) {
        proc_state& p = procs_[ev.cpu];
        p.wake_pending = false;
        if (ev.poll) p.poll_armed = false;
        if (p.current != no_task) return;
        if (p.sleeping) {
            p.sleeping = false;
            if (clock_ > p.sleep_since)
                m_.trace().emit({clock_, ev.cpu, trace_kind::idle, no_task, no_node,
                                 {{"begin", static_cast<std::int64_t>(p.sleep_since)},
                                  {"dur", static_cast<std::int64_t>(clock_ - p.sleep_since)}}});
        }
        schedule_cpu(ev.cpu);
    }

    void schedule_cpu(cpu_id cpu) {
        proc_state& p = procs_[cpu];
        if (p.current != no_task) return;
        for (;;) {
            task_id t = pol_->pick(cpu, clock_);
            if (t == no_task) {
                go_idle(cpu);
                return;
            }
            if (step_zero_cost(t, cpu)) {
                dispatch(cpu, t);
                return;
            }
            // the picked thread blocked or terminated without consuming time
        }
    }

    void go_idle(cpu_id cpu) {
        proc_state& p = procs_[cpu];
        if (!p.sleeping) {
            p.sleeping = true;
            p.sleep_since = clock_;
            p.sleep_seq = ++sleep_counter_;
        }
        if (m_.live_threads > 0 && !p.poll_armed) {
            p.poll_armed = true;
            push_event(clock_ + opt_.cost.thread_quantum,
                       {.kind = event_kind::wakeup, .cpu = cpu, .poll = true});
        }
    }

    /// Runs the thread on the processor for one quantum-bounded stretch.
    void dispatch(cpu_id cpu, task_id tid) {
        proc_state& p = procs_[cpu];
        thread_rec& th = m_.tasks().thread(tid);
        require(th.seg_remaining > 0, "dispatch: no work at current segment");

        p.current = tid;
        th.st = thread_state::running;
        th.pos = {task_position::kind::on_cpu, cpu};
        ++m_.running_threads;
        ++m_.progress;

        bool mig = th.last_cpu && *th.last_cpu != cpu;
        std::uint64_t pen = mig ? opt_.cost.migration_penalty : 0;
        if (mig) ++m_.counters().migrations;
        if (!th.data_node) th.data_node = m_.topo().numa_node_of(cpu); // first touch
        bool remote = m_.topo().numa_node_of(cpu) != *th.data_node;
        std::uint64_t per_unit = opt_.cost.ticks_per_unit(remote);

        std::uint64_t q_units = std::max<std::uint64_t>(1, opt_.cost.thread_quantum / per_unit);
        sim_time room = slice_room(tid);
        std::uint64_t s_units =
            room == time_infinity ? q_units : std::max<std::uint64_t>(1, room / per_unit);
        std::uint64_t units = std::min({th.seg_remaining, q_units, s_units});
        std::uint64_t dur = units * per_unit;
        std::uint64_t csc = opt_.cost.context_switch_cost;

        th.seg_remaining -= units;
        th.last_cpu = cpu;
        p.run_ticks = dur;
        m_.busy_ticks[cpu] += csc + pen + dur;
        if (remote) m_.remote_ticks[cpu] += dur;
        m_.executed_work += units;

        event_kind kind;
        if (th.seg_remaining > 0)
            kind = (s_units < q_units && units == s_units) ? event_kind::slice_expiry
                                                           : event_kind::quantum_end;
        else
            kind = terminates_without_cost(th) ? event_kind::thread_term
                                               : event_kind::quantum_end;

        push_event(clock_ + csc + pen + dur, {.kind = kind, .task = tid, .cpu = cpu});
        m_.trace().emit({clock_, cpu, trace_kind::run, tid, no_node,
                         {{"prio", th.prio},
                          {"dur", static_cast<std::int64_t>(dur)},
                          {"work", static_cast<std::int64_t>(units)},
                          {"csc", static_cast<std::int64_t>(csc)},
                          {"pen", static_cast<std::int64_t>(pen)},
                          {"mig", mig ? 1 : 0},
                          {"remote", remote ? 1 : 0}}});
    }

    /// Remaining slice budget: the tightest enclosing burst bubble with a
    /// finite time slice bounds how long members may run before the bubble
    /// is regenerated.
    sim_time slice_room(task_id tid) const {
        sim_time room = time_infinity;
        std::optional<task_id> cur = m_.tasks().thread(tid).parent;
        while (cur) {
            const bubble_rec& b = m_.tasks().bubble(*cur);
            if (b.st == bubble_state::burst && b.slice != time_infinity) {
                sim_time left = b.slice > b.consumed ? b.slice - b.consumed : 1;
                room = std::min(room, left);
            }
            cur = b.parent;
        }
        return room;
    }

    bool terminates_without_cost(const thread_rec& th) const {
        for (std::size_t i = th.seg + 1; i < th.program->size(); ++i) {
            const segment& s = (*th.program)[i];
            if (s.kind == segment::op::terminate) return true;
            if (s.kind == segment::op::barrier_wait) return false;
            if (s.kind == segment::op::compute && s.work > 0) return false;
        }
        return true;
    }

    void on_yield(const sim_event& ev) {
        proc_state& p = procs_[ev.cpu];
        require(p.current == ev.task, "yield event for a thread not on this cpu");
        p.current = no_task;
        thread_rec& th = m_.tasks().thread(ev.task);
        require(m_.running_threads > 0, "running count underflow");
        --m_.running_threads;
        th.pos = {task_position::kind::nowhere, 0};
        ++m_.progress;

        pol_->charge_slice(ev.task, p.run_ticks, clock_);
        if (th.seg_remaining == 0) ++th.seg; // compute segment complete

        if (!pol_->reclaim_if_needed(ev.task, clock_)) {
            if (th.seg_remaining > 0) {
                node_id l = pol_->place_runnable(ev.task, clock_);
                m_.trace().emit({clock_, ev.cpu, trace_kind::preempt, ev.task, l, {}});
            } else {
                if (step_zero_cost(ev.task, ev.cpu)) pol_->place_runnable(ev.task, clock_);
            }
        }
        schedule_cpu(ev.cpu);
    }

    /// Advances through spawn/barrier/terminate segments, which consume no
    /// simulated time. Returns true when the thread stands at a compute
    /// segment with work left (i.e. is runnable).
    bool step_zero_cost(task_id tid, cpu_id cpu) {
        for (;;) {
            thread_rec& th = m_.tasks().thread(tid);
            if (th.seg_remaining > 0) return true;
            require(th.seg < th.program->size(), "program ran past its end");
            const segment& s = (*th.program)[th.seg];
            switch (s.kind) {
            case segment::op::compute:
                if (s.work == 0) {
                    ++th.seg;
                    break;
                }
                th.seg_remaining = s.work;
                return true;
            case segment::op::spawn: {
                ++th.seg;
                for (const auto& child : s.children) pol_->admit(child, tid, clock_);
                break;
            }
            case segment::op::barrier_wait:
                ++th.seg;
                barrier_arrive(s.barrier, tid, cpu);
                return false;
            case segment::op::terminate:
                do_terminate(tid);
                return false;
            }
        }
    }

    void barrier_arrive(std::uint32_t bid, task_id tid, cpu_id cpu) {
        barrier_state& bar = barriers_.at(bid);
        thread_rec& th = m_.tasks().thread(tid);
        th.st = thread_state::blocked;
        th.pos = {task_position::kind::in_barrier, bid};
        th.barrier = bid;
        bar.waiters.push_back(tid);
        ++bar.arrived;
        require(bar.arrived <= bar.parties, "barrier overflow");
        ++m_.progress;
        m_.trace().emit({clock_, cpu, trace_kind::barrier_arrive, tid, no_node,
                         {{"barrier", bid}, {"arrived", bar.arrived}}});
        if (bar.arrived == bar.parties)
            push_event(clock_, {.kind = event_kind::barrier_release, .barrier = bid});
    }

    void on_barrier_release(std::uint32_t bid) {
        barrier_state& bar = barriers_.at(bid);
        m_.trace().emit({clock_, no_cpu, trace_kind::barrier_release, no_task, no_node,
                         {{"barrier", bid}, {"parties", bar.parties}}});
        std::vector<task_id> waiters = std::move(bar.waiters);
        bar.waiters.clear();
        bar.arrived = 0;
        ++bar.releases;
        ++m_.progress;
        for (task_id w : waiters) {
            thread_rec& th = m_.tasks().thread(w);
            th.pos = {task_position::kind::nowhere, 0};
            if (!pol_->reclaim_if_needed(w, clock_)) pol_->place_runnable(w, clock_);
        }
    }

    void do_terminate(task_id tid) {
        thread_rec& th = m_.tasks().thread(tid);
        th.st = thread_state::terminated;
        th.pos = {task_position::kind::nowhere, 0};
        require(m_.live_threads > 0, "live count underflow");
        --m_.live_threads;
        m_.last_termination = clock_;
        ++m_.progress;
        if (th.parent) m_.drop_live(*th.parent, 1);
        pol_->on_terminated(tid, clock_);
    }

    void flush_idle_records(sim_time makespan) {
        for (cpu_id c = 0; c < procs_.size(); ++c) {
            proc_state& p = procs_[c];
            if (p.sleeping && makespan > p.sleep_since) {
                m_.trace().emit({makespan, c, trace_kind::idle, no_task, no_node,
                                 {{"begin", static_cast<std::int64_t>(p.sleep_since)},
                                  {"dur", static_cast<std::int64_t>(makespan - p.sleep_since)}}});
                p.sleeping = false;
            }
        }
    }

    machine_state m_;
    sim_options opt_;
    std::unique_ptr<scheduler_policy> pol_;
    std::vector<proc_state> procs_;
    std::priority_queue<sim_event, std::vector<sim_event>, event_order> events_;
    std::vector<barrier_state> barriers_;
    std::uint64_t seq_ = 0;
    std::uint64_t sleep_counter_ = 0;
    sim_time clock_ = 0;
    bool loaded_ = false;
    std::uint64_t declared_work_ = 0;
};

} // namespace bubblesim
