#pragma once

// Umbrella header for the bubble-scheduling simulator library.

#include "baseline_sched.hpp"
#include "bubble_sched.hpp"
#include "config.hpp"
#include "metrics.hpp"
#include "program.hpp"
#include "runner.hpp"
#include "sched.hpp"
#include "sim.hpp"
#include "task.hpp"
#include "topology.hpp"
#include "trace.hpp"
#include "workloads.hpp"
#include "world.hpp"
