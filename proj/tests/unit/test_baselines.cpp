#include <catch2/catch_amalgamated.hpp>

#include "bubblesim/sim.hpp"
#include "bubblesim/workloads.hpp"

using namespace bubblesim;

namespace {

topology topo_4x4() {
    return topology(machine_of({{level_kind::numa, 4}, {level_kind::core, 4}}));
}

sim_options costs() {
    sim_options o;
    o.cost.numa_factor = 3.0;
    o.validate_each_event = true;
    return o;
}

program_ref tiny() { return make_program({segment::compute(10)}); }

} // namespace

TEST_CASE("opportunist placement: least loaded list, ties to the lowest cpu") {
    machine_state m(topo_4x4());
    opportunist_scheduler sched(m);
    // preload loads [2,0,1,1] on cpus 0..3
    for (int i = 0; i < 2; ++i) m.enqueue(m.create_thread_dontsched(10, tiny()), m.topo().leaf_node(0));
    m.enqueue(m.create_thread_dontsched(10, tiny()), m.topo().leaf_node(2));
    m.enqueue(m.create_thread_dontsched(10, tiny()), m.topo().leaf_node(3));

    task_id fresh = m.create_thread_dontsched(10, tiny());
    CHECK(sched.place_list(fresh) == m.topo().leaf_node(1));

    SECTION("all equal loads: lowest cpu id") {
        machine_state e(topo_4x4());
        opportunist_scheduler s2(e);
        task_id t = e.create_thread_dontsched(10, tiny());
        CHECK(s2.place_list(t) == e.topo().leaf_node(0));
    }
}

TEST_CASE("opportunist placement: last cpu preferred when within 1 of the minimum") {
    machine_state m(topo_4x4());
    opportunist_scheduler sched(m);
    // loads [1,0,2,2]
    m.enqueue(m.create_thread_dontsched(10, tiny()), m.topo().leaf_node(0));
    for (cpu_id c : {2u, 2u, 3u, 3u})
        m.enqueue(m.create_thread_dontsched(10, tiny()), m.topo().leaf_node(c));

    task_id t = m.create_thread_dontsched(10, tiny());
    m.tasks().thread(t).last_cpu = 0;
    CHECK(sched.place_list(t) == m.topo().leaf_node(0)); // within-1 affinity

    m.tasks().thread(t).last_cpu = 2; // load 2 > min 0 + 1: affinity loses
    CHECK(sched.place_list(t) == m.topo().leaf_node(1));
}

TEST_CASE("opportunist pick: own list first, then steal from the most loaded") {
    machine_state m(topo_4x4());
    opportunist_scheduler sched(m);
    task_id own = m.create_thread_dontsched(10, tiny());
    m.enqueue(own, m.topo().leaf_node(1));
    CHECK(sched.pick(1, 0) == own); // local pop, no steal

    // cpu 3 has 5 threads; cpu 0 empty: steal one from cpu 3
    std::vector<task_id> batch;
    for (int i = 0; i < 5; ++i) {
        task_id t = m.create_thread_dontsched(10, tiny());
        batch.push_back(t);
        m.enqueue(t, m.topo().leaf_node(3));
    }
    auto steals_before = m.counters().steals;
    task_id got = sched.pick(0, 0);
    CHECK(m.counters().steals == steals_before + 1);
    CHECK(got == batch.back()); // takes the cold tail
    CHECK(m.rq(m.topo().leaf_node(3)).size() == 4);

    SECTION("all lists empty: idle") {
        machine_state e(topo_4x4());
        opportunist_scheduler s2(e);
        CHECK(s2.pick(0, 0) == no_task);
    }
}

TEST_CASE("opportunist run flattens bubbles and counts migrations on steals") {
    fib_params fp;
    fp.n = 6;
    fp.threshold = 2;
    fp.bubble_mode = true; // bubbles declared, ignored by this scheduler
    workload wl = gen_fibonacci(fp);

    simulation sim(topo_4x4(), costs());
    sim.use_opportunist();
    sim.load(wl);
    auto m = sim.run();
    CHECK(sim.completed());
    CHECK(m.bursts == 0); // no bubble machinery involved
    std::size_t bubbles = 0;
    sim.machine().tasks().for_each_bubble([&](const bubble_rec&) { ++bubbles; });
    CHECK(bubbles == 0);
}

TEST_CASE("work conservation holds for the opportunist scheduler") {
    conduction_params p;
    p.threads = 16;
    p.cycles = 3;
    p.work = uniform_stripes(16, 100);
    p.grouping = conduction_grouping::flat;
    workload wl = gen_conduction(p, topo_4x4());

    simulation sim(topo_4x4(), costs());
    sim.use_opportunist();
    sim.load(wl);
    sim.run();
    CHECK(sim.machine().executed_work == 16 * 3 * 100);
}

TEST_CASE("single-list opportunist pops FIFO regardless of affinity") {
    machine_state m(topo_4x4());
    opportunist_scheduler sched(m, {.global_list = true, .affinity = true});
    task_id a = m.create_thread_dontsched(10, tiny());
    task_id b = m.create_thread_dontsched(10, tiny());
    sched.place_runnable(a, 0);
    sched.place_runnable(b, 0);
    CHECK(m.rq(m.topo().root()).size() == 2);
    CHECK(sched.pick(5, 0) == a);
    CHECK(sched.pick(9, 0) == b);
    CHECK(sched.pick(0, 0) == no_task);
}

TEST_CASE("bound scheduler pins threads and never migrates") {
    conduction_params p;
    p.threads = 16;
    p.cycles = 10;
    p.work = uniform_stripes(16, 200);
    p.grouping = conduction_grouping::per_numa; // structure flattened by the baseline
    workload wl = gen_conduction(p, topo_4x4());

    simulation sim(topo_4x4(), costs());
    sim.use_bound(wl.bindings);
    sim.load(wl);
    auto m = sim.run();
    CHECK(sim.completed());
    CHECK(m.migrations == 0);
    CHECK(m.total_remote() == 0);
    CHECK(m.steals == 0);
}

TEST_CASE("bound scheduler rejects unbound threads") {
    workload wl;
    for (int i = 0; i < 3; ++i)
        wl.roots.push_back(task_proto::thread(tiny()));
    wl.bindings = {0, 1}; // third thread unbound

    simulation sim(topo_4x4(), costs());
    sim.use_bound(wl.bindings);
    CHECK_THROWS_AS(sim.load(wl), config_error);
}

TEST_CASE("bound thread returns to its cpu after a barrier") {
    workload wl;
    wl.barrier_parties.push_back(2);
    for (int i = 0; i < 2; ++i)
        wl.roots.push_back(task_proto::thread(make_program(
            {segment::compute(50), segment::barrier_wait(0), segment::compute(50)})));
    wl.bindings = {3, 9};

    simulation sim(topo_4x4(), costs());
    sim.use_bound(wl.bindings);
    sim.load(wl);
    auto m = sim.run();
    CHECK(m.migrations == 0);
    for (const auto& r : sim.machine().trace().records())
        if (r.kind == trace_kind::run) CHECK((r.cpu == 3 || r.cpu == 9));
}
