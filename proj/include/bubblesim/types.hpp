#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace bubblesim {

using sim_time = std::uint64_t;
using task_id = std::uint32_t;
using node_id = std::uint32_t;
using cpu_id = std::uint32_t;   // dense leaf index, 0..P-1
using priority = int;

inline constexpr sim_time time_infinity = std::numeric_limits<sim_time>::max();
inline constexpr task_id no_task = std::numeric_limits<task_id>::max();
inline constexpr node_id no_node = std::numeric_limits<node_id>::max();
inline constexpr cpu_id no_cpu = std::numeric_limits<cpu_id>::max();

/// Raised for malformed configs, invalid scenario parameters and API misuse.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when the simulation cannot make progress (livelock/deadlock guard).
struct sim_abort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when an internal invariant is violated. Always on, also in release
/// builds: the invariant checks are part of the artifact's contract.
struct invariant_violation : std::logic_error {
    using std::logic_error::logic_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw invariant_violation(msg);
}

} // namespace bubblesim
