#include <catch2/catch_amalgamated.hpp>

#include "bubblesim/sim.hpp"
#include "bubblesim/workloads.hpp"

using namespace bubblesim;

namespace {

topology topo_4x4() {
    return topology(machine_of({{level_kind::numa, 4}, {level_kind::core, 4}}));
}

sim_options cheap_costs() {
    sim_options o;
    o.cost.context_switch_cost = 1;
    o.cost.migration_penalty = 5;
    o.cost.numa_factor = 3.0;
    o.cost.thread_quantum = 100;
    return o;
}

workload single_thread(std::uint64_t work) {
    workload wl;
    wl.roots.push_back(task_proto::thread(make_program({segment::compute(work)})));
    wl.bindings = {0};
    return wl;
}

} // namespace

TEST_CASE("empty workload finishes at time zero") {
    simulation sim(topo_4x4(), cheap_costs());
    sim.use_bubble_scheduler();
    sim.load(workload{});
    auto m = sim.run();
    CHECK(m.makespan == 0);
    CHECK(m.total_busy() == 0);
}

TEST_CASE("one thread of 100 work units costs the work plus switch costs") {
    simulation sim(topo_4x4(), cheap_costs());
    sim.use_bubble_scheduler();
    sim.load(single_thread(100));
    auto m = sim.run();
    CHECK(m.makespan == 101); // one dispatch: 1 switch + 100 ticks
    CHECK(m.total_busy() == 101);
    CHECK(m.remote_ratio == 0.0);
    CHECK(m.migrations == 0);
}

TEST_CASE("local vs remote execution rate") {
    // oracle: 10 units at tick 1 locally = 10 ticks; at factor 3 = 30 ticks
    cost_model c;
    c.numa_factor = 3.0;
    CHECK(c.ticks_per_unit(false) * 10 == 10);
    CHECK(c.ticks_per_unit(true) * 10 == 30);

    // first touch pins the home node; a later run on another node is remote
    simulation sim(topo_4x4(), cheap_costs());
    auto& m = sim.machine();
    sim.use_bubble_scheduler();
    workload wl;
    wl.roots.push_back(task_proto::thread(make_program({segment::compute(10)})));
    sim.load(wl);
    auto res = sim.run();
    CHECK(res.total_remote() == 0); // single placement: first touch is local

    // force the remote case directly through the machine state
    task_id t = 0;
    CHECK(m.tasks().thread(t).data_node == m.topo().numa_node_of(0));
}

TEST_CASE("migration penalty and remote ticks when a thread changes node") {
    // Two compute segments with a barrier wait in between; the release under
    // the flat/root placement may move the thread. Build it explicitly: run
    // segment 1 on cpu 0, then re-place on a remote cpu via bound bindings.
    topology topo = topo_4x4();
    sim_options opts = cheap_costs();

    // bound run: same cpu, no migration, no remote
    {
        simulation sim(topo_4x4(), opts);
        sim.use_bound({0});
        workload wl = single_thread(250); // three quanta on one cpu
        sim.load(wl);
        auto m = sim.run();
        CHECK(m.migrations == 0);
        CHECK(m.total_remote() == 0);
        // 3 dispatches (100+100+50) with 3 switch ticks
        CHECK(m.makespan == 253);
    }
}

TEST_CASE("barrier releases all parties at the same instant, N cycles -> N releases") {
    topology topo = topo_4x4();
    conduction_params p;
    p.threads = 16;
    p.cycles = 7;
    p.work = uniform_stripes(16, 50);
    p.grouping = conduction_grouping::flat;
    workload wl = gen_conduction(p, topo);

    simulation sim(topo_4x4(), cheap_costs());
    sim.use_bound(wl.bindings);
    sim.load(wl);
    auto m = sim.run();
    CHECK(sim.barrier(0).releases == 7);

    std::size_t releases = 0;
    sim_time last_release = 0;
    for (const auto& r : sim.machine().trace().records())
        if (r.kind == trace_kind::barrier_release) {
            ++releases;
            last_release = r.time;
        }
    CHECK(releases == 7);
    CHECK(last_release <= m.makespan);
    CHECK(m.migrations == 0); // bound: every re-place goes home
}

TEST_CASE("barrier overflow asserts, missing release deadlocks") {
    topology topo = topo_4x4();
    workload wl;
    wl.barrier_parties.push_back(3); // but only 2 threads will arrive
    for (int i = 0; i < 2; ++i)
        wl.roots.push_back(task_proto::thread(
            make_program({segment::compute(10), segment::barrier_wait(0)})));
    simulation sim(std::move(topo), cheap_costs());
    sim.use_bubble_scheduler();
    sim.load(wl);
    CHECK_THROWS_AS(sim.run(), sim_abort);
}

TEST_CASE("until bound stops the run early") {
    simulation sim(topo_4x4(), [] {
        auto o = cheap_costs();
        o.until = 50;
        return o;
    }());
    sim.use_bubble_scheduler();
    sim.load(single_thread(10000));
    auto m = sim.run();
    CHECK(m.makespan == 50);
    CHECK(!sim.completed());
}

TEST_CASE("work conservation across schedulers") {
    topology topo = topo_4x4();
    fib_params fp;
    fp.n = 8;
    fp.threshold = 2;
    workload wl = gen_fibonacci(fp);
    std::uint64_t declared = wl.total_work();

    for (int mode = 0; mode < 2; ++mode) {
        simulation sim(topo_4x4(), cheap_costs());
        if (mode == 0)
            sim.use_bubble_scheduler();
        else
            sim.use_opportunist();
        sim.load(wl);
        sim.run();
        CHECK(sim.machine().executed_work == declared);
    }
}

TEST_CASE("interference injection requires the bubble scheduler") {
    simulation sim(topo_4x4(), cheap_costs());
    sim.use_opportunist();
    CHECK_THROWS_AS(sim.inject_interference(1, 0), invariant_violation);

    simulation sim2(topo_4x4(), cheap_costs());
    sim2.use_bubble_scheduler();
    CHECK_NOTHROW(sim2.inject_interference(1, 0));
}

TEST_CASE("identical config and seed give byte-identical traces") {
    auto run_once = [](bool bubbles) {
        conduction_params p;
        p.threads = 16;
        p.cycles = 5;
        p.work = uniform_stripes(16, 120);
        p.work_jitter = 30;
        p.seed = 42;
        p.grouping = bubbles ? conduction_grouping::per_numa : conduction_grouping::flat;
        workload wl = gen_conduction(p, topo_4x4());
        simulation sim(topo_4x4(), cheap_costs());
        if (bubbles)
            sim.use_bubble_scheduler();
        else
            sim.use_opportunist();
        sim.load(wl);
        sim.run();
        return sim.machine().trace().to_bytes();
    };
    CHECK(run_once(true) == run_once(true));
    CHECK(run_once(false) == run_once(false));
    CHECK(run_once(true) != run_once(false));
}

TEST_CASE("conservation properties hold across seeds and schedulers") {
    for (std::uint64_t seed : {1ull, 7ull, 12345ull}) {
        conduction_params p;
        p.threads = 16;
        p.cycles = 3;
        p.work = uniform_stripes(16, 150);
        p.work_jitter = 60;
        p.seed = seed;
        workload wl = gen_conduction(p, topo_4x4());
        std::uint64_t declared = wl.total_work();
        for (int mode = 0; mode < 3; ++mode) {
            simulation sim(topo_4x4(), cheap_costs());
            if (mode == 0)
                sim.use_bubble_scheduler();
            else if (mode == 1)
                sim.use_opportunist();
            else
                sim.use_bound(wl.bindings);
            sim.load(wl);
            metrics m = sim.run();
            CHECK(sim.machine().executed_work == declared); // scheduler-independent
            for (std::size_t c = 0; c < m.busy.size(); ++c)
                CHECK(m.busy[c] + m.idle[c] == m.makespan);
            CHECK(m.remote_ratio >= 0.0);
            CHECK(m.remote_ratio <= 1.0);
        }
    }
}

TEST_CASE("validation sweep passes on every event of a mixed run") {
    auto opts = cheap_costs();
    opts.validate_each_event = true;
    fib_params fp;
    fp.n = 7;
    fp.threshold = 2;
    simulation sim(topo_4x4(), opts);
    sim.use_bubble_scheduler();
    sim.load(gen_fibonacci(fp));
    CHECK_NOTHROW(sim.run());
}
