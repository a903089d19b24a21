#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "types.hpp"

namespace bubblesim {

enum class trace_kind {
    run,
    preempt,
    burst,
    move_down,
    hoist,
    regenerate,
    steal,
    barrier_arrive,
    barrier_release,
    idle,
    retry,
};

inline std::string_view trace_kind_name(trace_kind k) {
    switch (k) {
    case trace_kind::run: return "Run";
    case trace_kind::preempt: return "Preempt";
    case trace_kind::burst: return "Burst";
    case trace_kind::move_down: return "MoveDown";
    case trace_kind::hoist: return "Hoist";
    case trace_kind::regenerate: return "Regenerate";
    case trace_kind::steal: return "Steal";
    case trace_kind::barrier_arrive: return "BarrierArrive";
    case trace_kind::barrier_release: return "BarrierRelease";
    case trace_kind::idle: return "Idle";
    case trace_kind::retry: return "Retry";
    }
    return "?";
}

/// One scheduling event. Detail keys are free-form; values are integers so a
/// trace byte stream is reproducible without float formatting concerns.
struct trace_record {
    sim_time time = 0;
    cpu_id cpu = no_cpu;    // no_cpu = none
    trace_kind kind = trace_kind::run;
    task_id task = no_task; // no_task = none
    node_id list = no_node; // no_node = none
    std::vector<std::pair<std::string, std::int64_t>> detail;

    std::int64_t get(std::string_view key, std::int64_t fallback = -1) const {
        for (const auto& [k, v] : detail)
            if (k == key) return v;
        return fallback;
    }
};

/// Line-delimited structured trace: one object per line, fixed key order, so
/// identical runs produce byte-identical streams.
inline std::string format_trace_line(const trace_record& r) {
    std::string out = "{\"time\":" + std::to_string(r.time);
    out += ",\"cpu\":";
    out += (r.cpu == no_cpu) ? "null" : std::to_string(r.cpu);
    out += ",\"kind\":\"";
    out += trace_kind_name(r.kind);
    out += "\",\"task\":";
    out += (r.task == no_task) ? "null" : std::to_string(r.task);
    out += ",\"list\":";
    out += (r.list == no_node) ? "null" : std::to_string(r.list);
    out += ",\"detail\":{";
    bool first = true;
    for (const auto& [k, v] : r.detail) {
        if (!first) out += ',';
        first = false;
        out += '"';
        out += k;
        out += "\":";
        out += std::to_string(v);
    }
    out += "}}";
    return out;
}

class trace_log {
public:
    void set_sink(std::ostream* os) { sink_ = os; }
    void disable_store(bool off) { store_off_ = off; }

    void emit(trace_record r) {
        if (sink_) {
            *sink_ << format_trace_line(r) << '\n';
            if (!*sink_) throw sim_abort("trace sink write failure");
        }
        if (!store_off_) records_.push_back(std::move(r));
    }

    const std::vector<trace_record>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }

    std::string to_bytes() const {
        std::string out;
        for (const auto& r : records_) {
            out += format_trace_line(r);
            out += '\n';
        }
        return out;
    }

private:
    std::vector<trace_record> records_;
    std::ostream* sink_ = nullptr;
    bool store_off_ = false;
};

} // namespace bubblesim
