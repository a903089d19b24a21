#include <catch2/catch_amalgamated.hpp>

#include "bubblesim/bubble_sched.hpp"
#include "bubblesim/world.hpp"

using namespace bubblesim;

namespace {

topology topo_4x4() {
    return topology(machine_of({{level_kind::numa, 4}, {level_kind::core, 4}}));
}

program_ref tiny_prog() { return make_program({segment::compute(10)}); }

task_id ready_thread(machine_state& m, priority p, node_id list) {
    task_id t = m.create_thread_dontsched(p, tiny_prog());
    m.enqueue(t, list);
    return t;
}

} // namespace

TEST_CASE("local task wins on equal or higher priority") {
    machine_state m(topo_4x4());
    bubble_scheduler sched(m);
    node_id leaf0 = m.topo().leaf_node(0);
    task_id local = ready_thread(m, 10, leaf0);
    ready_thread(m, 5, m.topo().root());

    auto d = sched.find_next_task(0, 0);
    REQUIRE(std::holds_alternative<run_thread>(d));
    CHECK(std::get<run_thread>(d).thread == local);
}

TEST_CASE("a more global higher-priority task beats local lower-priority ones") {
    machine_state m(topo_4x4());
    bubble_scheduler sched(m);
    ready_thread(m, 5, m.topo().leaf_node(0));
    task_id global = ready_thread(m, 10, m.topo().root());

    auto d = sched.find_next_task(0, 0);
    REQUIRE(std::holds_alternative<run_thread>(d));
    CHECK(std::get<run_thread>(d).thread == global);
}

TEST_CASE("equal priority across lists: most local list wins, FIFO within") {
    machine_state m(topo_4x4());
    bubble_scheduler sched(m);
    node_id numa0 = m.topo().coverage(0)[1];
    task_id first = ready_thread(m, 10, numa0);
    task_id second = ready_thread(m, 10, numa0);
    ready_thread(m, 10, m.topo().root());

    auto d1 = sched.find_next_task(0, 0);
    CHECK(std::get<run_thread>(d1).thread == first);
    auto d2 = sched.find_next_task(0, 0);
    CHECK(std::get<run_thread>(d2).thread == second);
}

TEST_CASE("threads are preferred over closed bubbles of lower priority") {
    machine_state m(topo_4x4());
    bubble_scheduler sched(m);
    task_id b = m.bubble_init(5, 0, time_infinity);
    task_id held = m.create_thread_dontsched(10, tiny_prog());
    m.bubble_insert_task(b, held);
    m.wake_up_bubble(b);
    task_id t = ready_thread(m, 10, m.topo().leaf_node(3));

    auto d = sched.find_next_task(3, 0);
    REQUIRE(std::holds_alternative<run_thread>(d));
    CHECK(std::get<run_thread>(d).thread == t);
    CHECK(m.tasks().bubble(b).st == bubble_state::closed);
}

TEST_CASE("descent steps equal the level distance, then the burst") {
    machine_state m(topo_4x4());
    bubble_scheduler sched(m);
    task_id b = m.bubble_init(5, /*leaf level*/ 2, time_infinity);
    task_id t1 = m.create_thread_dontsched(10, tiny_prog());
    task_id t2 = m.create_thread_dontsched(10, tiny_prog());
    m.bubble_insert_task(b, t1);
    m.bubble_insert_task(b, t2);
    m.wake_up_bubble(b);

    // depth difference root->leaf is 2: two descent steps, then the burst
    auto d1 = sched.find_next_task(5, 0);
    REQUIRE(std::holds_alternative<moved_bubble>(d1));
    CHECK(std::get<moved_bubble>(d1).from == m.topo().root());
    CHECK(std::get<moved_bubble>(d1).to == m.topo().coverage(5)[1]);

    auto d2 = sched.find_next_task(5, 0);
    REQUIRE(std::holds_alternative<moved_bubble>(d2));
    CHECK(std::get<moved_bubble>(d2).to == m.topo().leaf_node(5));

    auto d3 = sched.find_next_task(5, 0);
    REQUIRE(std::holds_alternative<burst_bubble>(d3));
    CHECK(std::get<burst_bubble>(d3).at == m.topo().leaf_node(5));
    CHECK(m.rq(m.topo().leaf_node(5)).size() == 2);
    CHECK(m.tasks().thread(t1).st == thread_state::ready);

    // descent events recorded and counted
    CHECK(m.counters().bursts == 1);
    m.validate();
}

TEST_CASE("empty bubble burst releases nothing and retires the bubble") {
    machine_state m(topo_4x4());
    bubble_scheduler sched(m);
    task_id b = m.bubble_init(5, 0, time_infinity);
    m.wake_up_bubble(b);

    auto d = sched.find_next_task(0, 0);
    REQUIRE(std::holds_alternative<burst_bubble>(d));
    CHECK(m.tasks().bubble(b).st == bubble_state::retired);
    for (node_id n = 0; n < m.topo().num_nodes(); ++n) CHECK(m.rq(n).empty());

    auto d2 = sched.find_next_task(0, 0);
    CHECK(is_idle(d2));
}

TEST_CASE("injected interference forces exactly one retry and a second choice") {
    machine_state m(topo_4x4());
    bubble_scheduler sched(m);
    node_id leaf0 = m.topo().leaf_node(0);
    task_id preferred = ready_thread(m, 10, leaf0);
    task_id fallback = ready_thread(m, 5, m.topo().root());

    sched.inject_interference(sched.lookups_done() + 1, leaf0);
    auto d = sched.find_next_task(0, 0);
    REQUIRE(std::holds_alternative<run_thread>(d));
    CHECK(std::get<run_thread>(d).thread == fallback); // second choice
    CHECK(m.counters().retries == 1);

    std::size_t retry_records = 0;
    for (const auto& r : m.trace().records())
        if (r.kind == trace_kind::retry) ++retry_records;
    CHECK(retry_records == 1);

    // the taken task went to a sibling leaf list, still schedulable there
    CHECK(m.tasks().thread(preferred).st == thread_state::ready);
    CHECK(m.tasks().thread(preferred).pos.where == m.topo().leaf_node(1));
}

TEST_CASE("interference on a non-selected list causes no retry") {
    machine_state m(topo_4x4());
    bubble_scheduler sched(m);
    task_id chosen = ready_thread(m, 10, m.topo().leaf_node(0));
    ready_thread(m, 5, m.topo().leaf_node(1)); // not covering cpu 0 anyway

    sched.inject_interference(sched.lookups_done() + 1, m.topo().leaf_node(1));
    auto d = sched.find_next_task(0, 0);
    CHECK(std::get<run_thread>(d).thread == chosen);
    CHECK(m.counters().retries == 0);
}

TEST_CASE("bounded retry falls back to whatever is available") {
    machine_state m(topo_4x4());
    bubble_scheduler sched(m, {.retry_limit = 8, .idle_repair = true, .repair_cooldown = 200});
    node_id leaf0 = m.topo().leaf_node(0);
    // distinct priorities: every injection empties the selected level, so the
    // revalidation keeps failing until the retry bound trips
    for (int i = 0; i < 16; ++i) ready_thread(m, 40 - i, leaf0);

    for (int i = 1; i <= 9; ++i)
        sched.inject_interference(sched.lookups_done() + i, leaf0);
    auto d = sched.find_next_task(0, 0);
    REQUIRE(std::holds_alternative<run_thread>(d));
    CHECK(m.counters().retries == 9); // bound exceeded, then the locked fallback
    // the fallback takes the best task still present
    CHECK(m.tasks().thread(std::get<run_thread>(d).thread).prio == 31);
}

TEST_CASE("lookup inspects at most twice the depth of the machine") {
    for (std::uint32_t depth_levels = 0; depth_levels <= 4; ++depth_levels) {
        topology_spec spec{{level_kind::machine, 1}};
        level_kind kinds[] = {level_kind::numa, level_kind::die, level_kind::core,
                              level_kind::smt};
        for (std::uint32_t l = 0; l < depth_levels; ++l) spec.push_back({kinds[l], 2});
        machine_state m(std::move(topology(spec)));
        bubble_scheduler sched(m);
        ready_thread(m, 10, m.topo().root());
        ready_thread(m, 4, m.topo().leaf_node(0));

        auto before = m.counters().list_inspections;
        auto d = sched.find_next_task(0, 0);
        REQUIRE(std::holds_alternative<run_thread>(d));
        auto used = m.counters().list_inspections - before;
        CHECK(used <= 2 * m.topo().depth());
        CHECK(m.counters().max_inspections_per_lookup <= 2 * m.topo().depth());
    }
}

TEST_CASE("single-level machine: no hoisting possible, idle when empty") {
    machine_state m(topology(topology_spec{{level_kind::machine, 1}}));
    bubble_scheduler sched(m);
    auto d = sched.find_next_task(0, 0);
    CHECK(is_idle(d));
    CHECK(sched.pick(0, 0) == no_task);
}
