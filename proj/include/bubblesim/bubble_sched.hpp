#pragma once

#include <algorithm>
#include <map>
#include <optional>

#include "sched.hpp"

namespace bubblesim {

/// The bubble scheduler: per-processor two-pass highest-priority lookup over
/// the covering lists, bubble descent and burst, time-slice regeneration and
/// idle repair.
class bubble_scheduler final : public scheduler_policy {
public:
    struct options {
        int retry_limit = 8;         // lookup revalidation retries before fallback
        bool idle_repair = true;
        sim_time repair_cooldown = 200; // min ticks between repair steals of one bubble
    };

    explicit bubble_scheduler(machine_state& m) : scheduler_policy(m) {}
    bubble_scheduler(machine_state& m, options opt) : scheduler_policy(m), opt_(opt) {}

    std::string_view name() const override { return "bubble"; }
    const options& opts() const { return opt_; }

    /// Test hook: before pass 2 of lookup number `lookup`, the head task of
    /// `victim` is taken by a phantom competitor (moved to a sibling list).
    void inject_interference(std::uint64_t lookup, node_id victim) {
        injections_[lookup] = victim;
    }
    std::uint64_t lookups_done() const { return lookup_seq_; }

    // ---- the lookup ----

    /// One two-pass lookup. Returns the dequeued thread, a bubble movement
    /// (descent step or burst, after which the caller looks again), or idle.
    sched_decision find_next_task(cpu_id cpu, sim_time now) {
        const auto& cov = m_.topo().coverage(cpu);
        int failures = 0;
        for (;;) {
            ++lookup_seq_;
            ++m_.counters().lookups;
            std::uint64_t inspected = 0;

            // Pass 1: lock-free scan, most local list first. Strictly higher
            // priority wins, so ties stay with the more local list; within a
            // list the bucket is FIFO.
            node_id best_list = no_node;
            priority best_prio = 0;
            for (node_id l : cov) {
                ++inspected;
                auto top = m_.rq(l).top_priority();
                if (top && (best_list == no_node || *top > best_prio)) {
                    best_prio = *top;
                    best_list = l;
                }
            }
            if (best_list == no_node) {
                account(inspected);
                return idle_decision{};
            }

            apply_injection(best_list);

            // Pass 2: lock the selected list and the processor's own list
            // (where the outgoing task was re-queued), high-level list
            // first, then check the selected list still has a task of this
            // priority in case it was taken in the meantime.
            node_id own = cov.front();
            auto& lk = m_.locks();
            lk.begin();
            lk.acquire(best_list, level_of(best_list));
            if (own != best_list) lk.acquire(own, level_of(own));
            ++inspected;
            task_id got = m_.rq(best_list).head_at(best_prio);
            if (got == no_task) {
                lk.end();
                ++m_.counters().retries;
                m_.trace().emit({now, cpu, trace_kind::retry, no_task, best_list,
                                 {{"attempt", failures + 1}}});
                account(inspected);
                if (++failures > opt_.retry_limit) return fallback_pick(cpu, now);
                continue;
            }
            lk.end();
            account(inspected);

            if (!m_.tasks().is_bubble(got)) {
                m_.detach(got);
                return run_thread{got};
            }
            return bubble_step(got, best_list, cpu, now);
        }
    }

    /// Handles a closed bubble found on `found_on`: one descent step toward
    /// the processor, or the burst once the wanted level is reached.
    sched_decision bubble_step(task_id bid, node_id found_on, cpu_id cpu, sim_time now) {
        bubble_rec& b = m_.tasks().bubble(bid);
        require(b.st == bubble_state::closed, "bubble_step: bubble not closed");
        std::uint32_t lvl = m_.topo().node(found_on).level;
        require(lvl <= b.burst_level, "bubble below its burst level");

        auto& lk = m_.locks();
        if (lvl < b.burst_level) {
            // Go down one level, along the invoking processor's path.
            const auto& cov = m_.topo().coverage(cpu);
            node_id child = no_node;
            for (std::size_t i = 1; i < cov.size(); ++i)
                if (cov[i] == found_on) child = cov[i - 1];
            require(child != no_node, "descent: list does not cover cpu");

            lk.begin();
            lk.acquire(found_on, lvl);
            lk.acquire(child, lvl + 1);
            m_.detach(bid);
            m_.enqueue(bid, child);
            lk.end();
            m_.trace().emit({now, cpu, trace_kind::move_down, bid, child,
                             {{"from", static_cast<std::int64_t>(found_on)}}});
            return moved_bubble{bid, found_on, child};
        }

        // Burst: release every held member onto this list.
        lk.begin();
        lk.acquire(found_on, lvl);
        std::int64_t avail = m_.ready_threads + m_.running_threads;
        m_.detach(bid);
        b.st = bubble_state::burst;
        b.burst_list = found_on;
        b.consumed = 0;
        b.held_record = b.members;
        std::size_t released = 0;
        for (task_id mid : b.members) {
            if (position_of(mid).k == task_position::kind::held) {
                m_.release_member(mid, found_on);
                ++released;
            }
        }
        lk.end();
        ++m_.counters().bursts;
        m_.trace().emit({now, cpu, trace_kind::burst, bid, found_on,
                         {{"members", static_cast<std::int64_t>(b.members.size())},
                          {"released", static_cast<std::int64_t>(released)},
                          {"avail", avail},
                          {"procs", static_cast<std::int64_t>(m_.topo().num_cpus())}}});
        if (b.live_threads == 0) retire(bid, now);
        return burst_bubble{bid, found_on};
    }

    task_id pick(cpu_id cpu, sim_time now) override {
        for (;;) {
            sched_decision d = find_next_task(cpu, now);
            if (auto* r = std::get_if<run_thread>(&d)) return r->thread;
            if (std::holds_alternative<idle_decision>(d)) {
                if (opt_.idle_repair && idle_repair(cpu, now)) continue;
                return no_task;
            }
            // bubble moved or burst: look again
        }
    }

    node_id place_runnable(task_id tid, sim_time) override {
        thread_rec& th = m_.tasks().thread(tid);
        node_id target = m_.topo().root();
        if (th.parent) {
            bubble_rec& pb = m_.tasks().bubble(*th.parent);
            require(pb.st == bubble_state::burst,
                    "runnable thread whose bubble is not burst");
            target = pb.burst_list;
        }
        m_.enqueue(tid, target);
        return target;
    }

    void admit(const task_proto& proto, task_id spawner, sim_time now) override {
        task_id built = build(proto);
        std::optional<task_id> holder;
        if (spawner != no_task) holder = m_.tasks().thread(spawner).parent;
        if (holder) {
            m_.bubble_insert_task(*holder, built);
            return;
        }
        if (m_.tasks().is_bubble(built)) {
            m_.wake_up_bubble(built);
        } else {
            m_.enqueue(built, m_.topo().root());
        }
        (void)now;
    }

    bool reclaim_if_needed(task_id tid, sim_time now) override {
        thread_rec& th = m_.tasks().thread(tid);
        if (!th.parent) return false;
        bubble_rec& pb = m_.tasks().bubble(*th.parent);
        if (th.reclaim_on_yield) {
            // counted at regeneration start; the last return closes the bubble
            require(pb.st == bubble_state::regenerating,
                    "reclaim flag set but bubble not regenerating");
            th.reclaim_on_yield = false;
            m_.hold(tid, pb.id);
            member_returned(pb.id, now);
            return true;
        }
        if (pb.st == bubble_state::regenerating || pb.st == bubble_state::closed) {
            // unblocked after the bubble left: absorbed, released at re-burst
            m_.hold(tid, pb.id);
            return true;
        }
        return false;
    }

    /// Adds executed ticks to every enclosing burst bubble and regenerates
    /// the ones whose time slice expired. Called at the yielding thread's
    /// scheduling point, so the yielder is reclaimed on the spot and the
    /// other released members as their processors reach scheduling points.
    void charge_slice(task_id tid, sim_time ticks, sim_time now) override {
        std::optional<task_id> cur = m_.tasks().thread(tid).parent;
        while (cur) {
            bubble_rec& b = m_.tasks().bubble(*cur);
            if (b.st == bubble_state::burst && b.slice != time_infinity) {
                b.consumed += ticks;
                if (b.consumed >= b.slice)
                    begin_regeneration(b.id, b.home_list, false, now);
            } else if (b.st == bubble_state::burst) {
                b.consumed += ticks;
            }
            cur = b.parent;
        }
    }

    void on_terminated(task_id tid, sim_time now) override {
        thread_rec& th = m_.tasks().thread(tid);
        if (!th.parent) return;
        bubble_rec& pb = m_.tasks().bubble(*th.parent);
        if (pb.st == bubble_state::regenerating) {
            // a member that would have returned is gone instead
            member_returned(pb.id, now);
        } else {
            retire_if_dead(pb.id, now);
        }
    }

    bool steals_across_lists() const override { return false; }

    // ---- regeneration ----

    /// Reclaims a burst bubble's members: ready ones immediately, running
    /// and blocked ones as they reach a scheduling point. The last return
    /// closes the bubble and queues it at the tail of `target`.
    void begin_regeneration(task_id bid, node_id target, bool repair, sim_time now) {
        bubble_rec& b = m_.tasks().bubble(bid);
        require(b.st == bubble_state::burst, "regenerating a bubble that is not burst");
        b.st = bubble_state::regenerating;
        b.regen_target = target;
        b.regen_for_repair = repair;
        b.pending_returns = 1; // construction sentinel, dropped after the scan
        ++m_.counters().regenerations;
        m_.trace().emit({now, no_cpu, trace_kind::regenerate, bid, b.burst_list,
                         {{"repair", repair ? 1 : 0},
                          {"live", static_cast<std::int64_t>(b.live_threads)}}});

        // Reclaim queued members under ordered locks.
        std::vector<task_id> queued;
        for (task_id mid : b.members) {
            if (position_of(mid).k == task_position::kind::on_list)
                queued.push_back(mid);
        }
        std::sort(queued.begin(), queued.end(), [&](task_id a, task_id c) {
            node_id la = position_of(a).where, lc = position_of(c).where;
            auto ka = std::make_pair(level_of(la), la);
            auto kc = std::make_pair(level_of(lc), lc);
            if (ka != kc) return ka < kc;
            return a < c;
        });
        auto& lk = m_.locks();
        lk.begin();
        node_id last_locked = no_node;
        for (task_id mid : queued) {
            node_id l = position_of(mid).where;
            if (l != last_locked) {
                lk.acquire(l, level_of(l));
                last_locked = l;
            }
            m_.detach(mid);
            m_.hold(mid, bid);
        }
        lk.end();

        for (task_id mid : b.members) {
            if (m_.tasks().is_bubble(mid)) {
                bubble_rec& sub = m_.tasks().bubble(mid);
                if (sub.st == bubble_state::burst) {
                    ++b.pending_returns;
                    begin_regeneration(mid, no_node, false, now); // absorbs into parent
                } else if (sub.st == bubble_state::regenerating) {
                    sub.regen_target = no_node; // redirect into the parent
                    ++b.pending_returns;
                }
            } else {
                thread_rec& th = m_.tasks().thread(mid);
                if (th.st == thread_state::running) {
                    th.reclaim_on_yield = true;
                    ++b.pending_returns;
                }
                // blocked members do not hold up closure: they are absorbed
                // when the barrier releases them (the bubble may have moved
                // or closed by then)
            }
        }
        member_returned(bid, now); // drop the sentinel
    }

    // ---- idle repair ----

    /// Walks up from an idle processor looking for work on lists it is not
    /// covered by: first a closed bubble queued in a sibling subtree (pure
    /// queued work, moved up immediately), otherwise a burst bubble worth
    /// regenerating and pulling over. Returns true when the lookup should be
    /// retried right away.
    bool idle_repair(cpu_id cpu, sim_time now) {
        const auto& cov = m_.topo().coverage(cpu);
        for (std::size_t i = 1; i < cov.size(); ++i) {
            node_id ancestor = cov[i];
            node_id my_side = cov[i - 1];
            std::uint32_t cap = m_.topo().leaves_under(my_side);

            task_id closed_pick = no_task;
            std::uint32_t closed_live = 0;
            task_id regen_pick = no_task;
            std::uint32_t regen_live = 0;

            m_.tasks().for_each_bubble([&](const bubble_rec& b) {
                if (b.live_threads == 0) return;
                if (b.st == bubble_state::closed &&
                    b.pos.k == task_position::kind::on_list) {
                    node_id l = b.pos.where;
                    if (l == ancestor || !m_.topo().in_subtree(ancestor, l) ||
                        m_.topo().in_subtree(my_side, l))
                        return;
                    if (b.last_repair != 0 && now < b.last_repair + opt_.repair_cooldown)
                        return; // freshly moved: let the target side claim it
                    if (closed_pick == no_task || b.live_threads > closed_live ||
                        (b.live_threads == closed_live && b.id < closed_pick)) {
                        closed_pick = b.id;
                        closed_live = b.live_threads;
                    }
                    return;
                }
                if (b.st != bubble_state::burst) return;
                node_id l = b.burst_list;
                if (l == ancestor || !m_.topo().in_subtree(ancestor, l) ||
                    m_.topo().in_subtree(my_side, l))
                    return;
                if (b.live_threads > cap) return; // would not fit the idle side
                if (repair_in_flight_) return;
                if (b.last_repair != 0 && now < b.last_repair + opt_.repair_cooldown)
                    return;
                auto counts = member_counts(b);
                bool payload_now = counts.first > 0;
                if (!payload_now &&
                    (counts.second == 0 || anchored_live_threads(my_side) > 0))
                    return;
                if (regen_pick == no_task || b.live_threads > regen_live ||
                    (b.live_threads == regen_live && b.id < regen_pick)) {
                    regen_pick = b.id;
                    regen_live = b.live_threads;
                }
            });

            // The bubble is delivered to the idle processor's own side of the
            // ancestor (never below its burst level), so it descends and
            // re-bursts over here instead of being re-claimed by the
            // processors it was taken from.
            if (closed_pick != no_task) {
                bubble_rec& b = m_.tasks().bubble(closed_pick);
                node_id target = delivery_list(cpu, my_side, b.burst_level);
                node_id from = b.pos.where;
                m_.detach(closed_pick);
                b.home_list = target;
                b.last_repair = now;
                ++m_.counters().hoists;
                m_.trace().emit({now, cpu, trace_kind::hoist, closed_pick, target,
                                 {{"from", static_cast<std::int64_t>(from)},
                                  {"queued", 1}}});
                m_.enqueue(closed_pick, target);
                return true; // visible now: retry the lookup
            }
            if (regen_pick != no_task) {
                bubble_rec& b = m_.tasks().bubble(regen_pick);
                node_id target = delivery_list(cpu, my_side, b.burst_level);
                b.last_repair = now;
                repair_in_flight_ = true;
                begin_regeneration(regen_pick, target, true, now);
                // If every member was queued the bubble is already closed on
                // this side; otherwise it arrives once the runners yield.
                return m_.tasks().bubble(regen_pick).st == bubble_state::closed;
            }
        }
        return false;
    }

private:
    int level_of(node_id l) const { return static_cast<int>(m_.topo().node(l).level); }

    /// List on `cpu`'s coverage path at `side`'s level, raised to the
    /// bubble's burst level when the side sits deeper than that.
    node_id delivery_list(cpu_id cpu, node_id side, std::uint32_t burst_level) const {
        std::uint32_t lvl = std::min(burst_level, m_.topo().node(side).level);
        const auto& cov = m_.topo().coverage(cpu);
        return cov[(m_.topo().depth() - 1) - lvl];
    }

    const task_position& position_of(task_id t) const {
        return m_.tasks().is_bubble(t) ? m_.tasks().bubble(t).pos
                                       : m_.tasks().thread(t).pos;
    }

    void account(std::uint64_t inspected) {
        m_.counters().list_inspections += inspected;
        m_.counters().max_inspections_per_lookup =
            std::max(m_.counters().max_inspections_per_lookup, inspected);
    }

    task_id build(const task_proto& proto) {
        if (!proto.bubble) {
            require(proto.program != nullptr, "thread proto without a program");
            return m_.create_thread_dontsched(resolve_prio(proto), proto.program);
        }
        std::uint32_t lvl = proto.burst_level < 0 ? m_.topo().depth() - 1
                                                  : static_cast<std::uint32_t>(proto.burst_level);
        task_id b = m_.bubble_init(resolve_prio(proto), lvl, proto.slice);
        for (const auto& mp : proto.members) m_.bubble_insert_task(b, build(mp));
        return b;
    }

    void apply_injection(node_id selected) {
        auto it = injections_.find(lookup_seq_);
        if (it == injections_.end()) return;
        node_id victim = it->second;
        injections_.erase(it);
        (void)selected;
        auto& rq = m_.rq(victim);
        if (rq.empty()) return;
        task_id t = rq.head();
        m_.detach(t);
        m_.enqueue(t, steal_destination(victim));
    }

    /// Where a phantom competitor would have put the task it took: the next
    /// sibling list at the same level (a list not covering this processor),
    /// or the parent/first child at the tree edges.
    node_id steal_destination(node_id victim) const {
        const auto& n = m_.topo().node(victim);
        if (n.parent == no_node)
            return n.children.empty() ? victim : n.children.front();
        const auto& sibs = m_.topo().node(n.parent).children;
        for (std::size_t i = 0; i < sibs.size(); ++i)
            if (sibs[i] == victim)
                return sibs.size() == 1 ? n.parent : sibs[(i + 1) % sibs.size()];
        return n.parent;
    }

    /// Bounded-retry fallback: lock the whole coverage chain (root first, per
    /// the lock order) and take whatever is available right now.
    sched_decision fallback_pick(cpu_id cpu, sim_time now) {
        const auto& cov = m_.topo().coverage(cpu);
        auto& lk = m_.locks();
        lk.begin();
        for (auto it = cov.rbegin(); it != cov.rend(); ++it)
            lk.acquire(*it, level_of(*it));
        node_id best_list = no_node;
        priority best_prio = 0;
        std::uint64_t inspected = 0;
        for (node_id l : cov) {
            ++inspected;
            auto top = m_.rq(l).top_priority();
            if (top && (best_list == no_node || *top > best_prio)) {
                best_prio = *top;
                best_list = l;
            }
        }
        account(inspected);
        if (best_list == no_node) {
            lk.end();
            return idle_decision{};
        }
        task_id got = m_.rq(best_list).head_at(best_prio);
        lk.end();
        if (!m_.tasks().is_bubble(got)) {
            m_.detach(got);
            return run_thread{got};
        }
        return bubble_step(got, best_list, cpu, now);
    }

    std::pair<std::uint32_t, std::uint32_t> member_counts(const bubble_rec& b) const {
        std::uint32_t ready = 0, running = 0;
        for (task_id mid : b.members) {
            if (m_.tasks().is_bubble(mid)) {
                const bubble_rec& sub = m_.tasks().bubble(mid);
                if (sub.st == bubble_state::closed &&
                    sub.pos.k == task_position::kind::on_list && sub.live_threads > 0)
                    ++ready;
                continue;
            }
            const thread_rec& th = m_.tasks().thread(mid);
            if (th.st == thread_state::ready) ++ready;
            if (th.st == thread_state::running) ++running;
        }
        return {ready, running};
    }

    /// Live threads whose work is attached to the subtree under `region`:
    /// positioned there, or held/blocked under a bubble whose list is there.
    std::uint32_t anchored_live_threads(node_id region) const {
        std::uint32_t n = 0;
        m_.tasks().for_each_thread([&](const thread_rec& th) {
            if (th.st == thread_state::terminated || th.st == thread_state::not_started)
                return;
            std::optional<node_id> anchor;
            if (th.pos.k == task_position::kind::on_list) anchor = th.pos.where;
            if (th.pos.k == task_position::kind::on_cpu)
                anchor = m_.topo().leaf_node(th.pos.where);
            if (!anchor) {
                std::optional<task_id> cur = th.parent;
                while (cur && !anchor) {
                    const bubble_rec& b = m_.tasks().bubble(*cur);
                    if (b.st == bubble_state::burst)
                        anchor = b.burst_list;
                    else if (b.pos.k == task_position::kind::on_list)
                        anchor = b.pos.where;
                    cur = b.parent;
                }
            }
            if (anchor && m_.topo().in_subtree(region, *anchor)) ++n;
        });
        return n;
    }

    void member_returned(task_id bid, sim_time now) {
        bubble_rec& b = m_.tasks().bubble(bid);
        require(b.st == bubble_state::regenerating, "member returned to settled bubble");
        require(b.pending_returns > 0, "pending return underflow");
        if (--b.pending_returns == 0) finish_regeneration(bid, now);
    }

    void finish_regeneration(task_id bid, sim_time now) {
        bubble_rec& b = m_.tasks().bubble(bid);
        b.st = bubble_state::closed;
        b.consumed = 0; // a re-burst gets a full slice again

        // Conservation: everything recorded at burst is now back inside,
        // terminated, or still sitting in a barrier (those members are
        // absorbed when released).
        std::uint32_t held_now = 0, gone = 0, blocked = 0;
        for (task_id mid : b.members) {
            if (position_of(mid).k == task_position::kind::held) ++held_now;
            if (m_.tasks().is_bubble(mid)) {
                if (m_.tasks().bubble(mid).st == bubble_state::retired) ++gone;
            } else {
                if (m_.tasks().thread(mid).st == thread_state::terminated) ++gone;
                if (m_.tasks().thread(mid).st == thread_state::blocked) ++blocked;
            }
        }
        require(held_now + gone + blocked == b.members.size(),
                "regeneration lost a member");

        bool repair = b.regen_for_repair;
        node_id target = b.regen_target;
        b.regen_for_repair = false;
        b.regen_target = no_node;
        if (repair) repair_in_flight_ = false;

        if (target == no_node) {
            // Regenerated as part of the holder's own regeneration: the
            // holder counted this sub-bubble as a pending return.
            require(b.parent.has_value(), "absorbing regeneration without holder");
            task_id parent = *b.parent;
            if (b.live_threads == 0)
                mark_retired(bid);
            else
                m_.hold(bid, parent);
            member_returned(parent, now);
            return;
        }
        if (b.live_threads == 0) {
            mark_retired(bid);
            retire_upward(bid, now);
            return;
        }
        if (repair) {
            ++m_.counters().hoists;
            m_.trace().emit({now, no_cpu, trace_kind::hoist, bid, target,
                             {{"from", static_cast<std::int64_t>(b.burst_list)},
                              {"queued", 0}}});
            b.home_list = target;
        }
        m_.enqueue(bid, target);
    }

    void retire(task_id bid, sim_time now) {
        mark_retired(bid);
        retire_upward(bid, now);
    }

    void mark_retired(task_id bid) {
        bubble_rec& b = m_.tasks().bubble(bid);
        if (b.st == bubble_state::retired) return;
        if (b.pos.k == task_position::kind::on_list) m_.detach(bid);
        b.st = bubble_state::retired;
        b.pos = {task_position::kind::nowhere, 0};
    }

    void retire_upward(task_id bid, sim_time now) {
        const bubble_rec& b = m_.tasks().bubble(bid);
        if (b.parent) retire_if_dead(*b.parent, now);
    }

    void retire_if_dead(task_id bid, sim_time now) {
        bubble_rec& b = m_.tasks().bubble(bid);
        if (b.st == bubble_state::retired || b.live_threads > 0) return;
        if (b.st == bubble_state::regenerating) return; // settles when pending returns land
        if (!b.woken && b.pos.k == task_position::kind::nowhere && !b.parent)
            return; // never entered the machine
        mark_retired(bid);
        retire_upward(bid, now);
    }

    options opt_;
    std::uint64_t lookup_seq_ = 0;
    bool repair_in_flight_ = false;
    std::map<std::uint64_t, node_id> injections_;
};

} // namespace bubblesim
