#pragma once

#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "types.hpp"

namespace bubblesim {

/// Ready-task list attached to one topology node. Buckets are per-priority
/// FIFO queues; a task appears on at most one runqueue machine-wide (enforced
/// by the position bookkeeping in machine_state).
class runqueue {
public:
    runqueue() = default;
    explicit runqueue(node_id id) : id_(id) {}

    node_id id() const { return id_; }
    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    void push_tail(priority p, task_id t) {
        buckets_[p].push_back(t);
        ++size_;
    }

    /// Highest priority present, if any.
    std::optional<priority> top_priority() const {
        if (buckets_.empty()) return std::nullopt;
        return buckets_.begin()->first;
    }

    /// Head of the FIFO bucket at priority p; no_task when empty.
    task_id head_at(priority p) const {
        auto it = buckets_.find(p);
        if (it == buckets_.end() || it->second.empty()) return no_task;
        return it->second.front();
    }

    task_id pop_head(priority p) {
        auto it = buckets_.find(p);
        require(it != buckets_.end() && !it->second.empty(), "pop_head: empty bucket");
        task_id t = it->second.front();
        it->second.pop_front();
        if (it->second.empty()) buckets_.erase(it);
        --size_;
        return t;
    }

    /// Head task of the whole list (highest priority, FIFO within).
    task_id head() const {
        if (buckets_.empty()) return no_task;
        return buckets_.begin()->second.front();
    }

    bool remove(priority p, task_id t) {
        auto it = buckets_.find(p);
        if (it == buckets_.end()) return false;
        auto& q = it->second;
        for (auto qi = q.begin(); qi != q.end(); ++qi) {
            if (*qi == t) {
                q.erase(qi);
                if (q.empty()) buckets_.erase(it);
                --size_;
                return true;
            }
        }
        return false;
    }

    /// Tail of the lowest-priority bucket (used by the opportunist stealer).
    std::pair<priority, task_id> coldest() const {
        require(size_ > 0, "coldest: empty list");
        auto it = std::prev(buckets_.end());
        return {it->first, it->second.back()};
    }

    bool remove_tail(priority p) {
        auto it = buckets_.find(p);
        if (it == buckets_.end() || it->second.empty()) return false;
        it->second.pop_back();
        if (it->second.empty()) buckets_.erase(it);
        --size_;
        return true;
    }

    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (const auto& [p, q] : buckets_)
            for (task_id t : q) fn(p, t);
    }

private:
    node_id id_ = no_node;
    std::size_t size_ = 0;
    std::map<priority, std::deque<task_id>, std::greater<priority>> buckets_;
};

/// Simulated lock discipline checker. Locks here carry no mutual exclusion
/// (the simulator is single-threaded); what matters is the acquisition order
/// convention: higher-level lists first, then by element id. Every critical
/// section is audited and a violation throws.
class lock_auditor {
public:
    void begin() {
        require(held_.empty(), "lock sequence started while locks held");
        held_.clear();
    }

    void acquire(node_id list, int level) {
        for (const auto& [l, lv] : held_) {
            require(l != list, "double lock of list");
            bool ordered = lv < level || (lv == level && l < list);
            require(ordered, "lock order violation: list " + std::to_string(list) +
                                 " after list " + std::to_string(l));
        }
        held_.emplace_back(list, level);
        ++acquisitions_;
    }

    void end() { held_.clear(); }

    std::uint64_t acquisitions() const { return acquisitions_; }

private:
    std::vector<std::pair<node_id, int>> held_;
    std::uint64_t acquisitions_ = 0;
};

} // namespace bubblesim
