#include <catch2/catch_amalgamated.hpp>

#include "bubblesim/bubble_sched.hpp"
#include "bubblesim/world.hpp"

using namespace bubblesim;

namespace {

topology topo_4x4() {
    return topology(machine_of({{level_kind::numa, 4}, {level_kind::core, 4}}));
}

program_ref tiny_prog() { return make_program({segment::compute(10)}); }

} // namespace

TEST_CASE("bubble_init yields a closed empty bubble off all lists") {
    machine_state m(topo_4x4());
    task_id b = m.bubble_init(5, 0, time_infinity);
    const bubble_rec& br = m.tasks().bubble(b);
    CHECK(br.st == bubble_state::closed);
    CHECK(br.members.empty());
    CHECK(br.pos.k == task_position::kind::nowhere);
    CHECK(br.slice == time_infinity);
}

TEST_CASE("default priority regime: threads above bubbles") {
    CHECK(default_thread_priority > default_bubble_priority);
}

TEST_CASE("create_thread_dontsched: not started, on no runqueue") {
    machine_state m(topo_4x4());
    task_id t = m.create_thread_dontsched(10, tiny_prog());
    CHECK(m.tasks().thread(t).st == thread_state::not_started);
    CHECK(m.tasks().thread(t).pos.k == task_position::kind::nowhere);
    m.validate();
}

TEST_CASE("priority above the bound is clamped with a warning") {
    machine_state m(topo_4x4());
    task_id t = m.create_thread_dontsched(m.max_priority() + 50, tiny_prog());
    CHECK(m.tasks().thread(t).prio == m.max_priority());
    REQUIRE(m.warnings().size() == 1);
    CHECK(m.warnings()[0].find("clamped") != std::string::npos);
}

TEST_CASE("insert into a closed bubble holds the member without scheduling it") {
    machine_state m(topo_4x4());
    task_id b = m.bubble_init(5, 1, time_infinity);
    task_id t1 = m.create_thread_dontsched(10, tiny_prog());
    task_id t2 = m.create_thread_dontsched(10, tiny_prog());
    m.bubble_insert_task(b, t1);
    m.bubble_insert_task(b, t2);
    CHECK(m.tasks().bubble(b).members == std::vector<task_id>{t1, t2});
    CHECK(m.tasks().thread(t1).st == thread_state::in_bubble);
    CHECK(m.tasks().thread(t1).pos.k == task_position::kind::held);
    CHECK(m.tasks().bubble(b).live_threads == 2);
    m.validate();
}

TEST_CASE("nested insertion builds a forest edge") {
    machine_state m(topo_4x4());
    task_id outer = m.bubble_init(5, 0, time_infinity);
    task_id inner = m.bubble_init(5, 1, time_infinity);
    m.bubble_insert_task(outer, inner);
    CHECK(m.tasks().bubble(inner).parent == outer);

    // already parented: a second holder is rejected
    task_id other = m.bubble_init(5, 0, time_infinity);
    CHECK_THROWS_AS(m.bubble_insert_task(other, inner), config_error);
}

TEST_CASE("membership cycles rejected") {
    machine_state m(topo_4x4());
    task_id b = m.bubble_init(5, 0, time_infinity);
    CHECK_THROWS_AS(m.bubble_insert_task(b, b), config_error);

    task_id outer = m.bubble_init(5, 0, time_infinity);
    task_id inner = m.bubble_init(5, 1, time_infinity);
    m.bubble_insert_task(outer, inner);
    CHECK_THROWS_AS(m.bubble_insert_task(inner, outer), config_error);
}

TEST_CASE("wake_up_bubble enqueues on the general list") {
    machine_state m(topo_4x4());
    task_id b = m.bubble_init(5, 1, time_infinity);
    task_id t1 = m.create_thread_dontsched(10, tiny_prog());
    task_id t2 = m.create_thread_dontsched(10, tiny_prog());
    m.bubble_insert_task(b, t1);
    m.bubble_insert_task(b, t2);
    m.wake_up_bubble(b);
    CHECK(m.rq(m.topo().root()).size() == 1);
    CHECK(m.rq(m.topo().root()).head() == b);
    CHECK(m.tasks().bubble(b).home_list == m.topo().root());
    m.validate();

    SECTION("waking twice is an error") {
        CHECK_THROWS_AS(m.wake_up_bubble(b), config_error);
    }
}

TEST_CASE("waking a parented bubble is rejected") {
    machine_state m(topo_4x4());
    task_id outer = m.bubble_init(5, 0, time_infinity);
    task_id inner = m.bubble_init(5, 1, time_infinity);
    m.bubble_insert_task(outer, inner);
    CHECK_THROWS_AS(m.wake_up_bubble(inner), config_error);
}

TEST_CASE("burst level beyond the machine depth is rejected at wake-up") {
    machine_state m(topo_4x4()); // depth 3: levels 0..2
    task_id b = m.bubble_init(5, 3, time_infinity);
    CHECK_THROWS_AS(m.wake_up_bubble(b), config_error);
}

TEST_CASE("zero time slice rejected") {
    machine_state m(topo_4x4());
    CHECK_THROWS_AS(m.bubble_init(5, 0, 0), config_error);
}

TEST_CASE("insert into a burst bubble releases the member immediately") {
    machine_state m(topo_4x4());
    bubble_scheduler sched(m);
    task_id b = m.bubble_init(5, 0, time_infinity); // bursts on the root list
    task_id t1 = m.create_thread_dontsched(10, tiny_prog());
    m.bubble_insert_task(b, t1);
    m.wake_up_bubble(b);

    auto d = sched.find_next_task(0, 0);
    REQUIRE(std::holds_alternative<burst_bubble>(d));
    CHECK(m.tasks().bubble(b).st == bubble_state::burst);
    CHECK(m.tasks().thread(t1).st == thread_state::ready);

    // the post-wake-up insert: the new member joins the burst list directly
    task_id t2 = m.create_thread_dontsched(10, tiny_prog());
    m.bubble_insert_task(b, t2);
    CHECK(m.tasks().thread(t2).st == thread_state::ready);
    CHECK(m.tasks().thread(t2).pos.k == task_position::kind::on_list);
    CHECK(m.tasks().thread(t2).pos.where == m.topo().root());
    CHECK(m.tasks().bubble(b).held_record == std::vector<task_id>{t1, t2});
    m.validate();
}
