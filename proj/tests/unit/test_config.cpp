#include <catch2/catch_amalgamated.hpp>

#include "bubblesim/config.hpp"
#include "bubblesim/runner.hpp"

using namespace bubblesim;

TEST_CASE("minimal config: topology and scenario, defaults filled") {
    run_config cfg = parse_config(R"(
topology = [["numa",4],["core",4]]
[scenario]
name = "conduction"
)");
    CHECK(cfg.topo.size() == 3);
    CHECK(cfg.topo[0].kind == level_kind::machine);
    CHECK(cfg.sched.kind == "bubble");
    CHECK(cfg.cost.numa_factor == 3.0);
    CHECK(cfg.cost.thread_quantum == 100);
    CHECK(cfg.cost.context_switch_cost == 1);
    CHECK(cfg.scenario.threads == 16);
    CHECK(cfg.seed == 1);
    CHECK(cfg.until == 0);
}

TEST_CASE("config errors carry line information") {
    try {
        parse_config("topology = [[\"numa\",4]]\n\n[scenario]\nname = \"conduction\"\nbogus_key = 3\n");
        FAIL("expected config_error");
    } catch (const config_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("line 5") != std::string::npos);
        CHECK(msg.find("bogus_key") != std::string::npos);
    }

    CHECK_THROWS_AS(parse_config("topology = [[\"numa\",4]]\n[scenario]\nname = \"conduction\"\nthreads = \"many\"\n"),
                    config_error);
    CHECK_THROWS_AS(parse_config("[scenario]\nname = \"conduction\"\n"), config_error);
    CHECK_THROWS_AS(parse_config("topology = [[\"numa\",4]]\nscheduler = \"magic\"\n[scenario]\nname = \"conduction\"\n"),
                    config_error);
    CHECK_THROWS_AS(parse_config("topology = [[\"bogus\",4]]\n[scenario]\nname = \"conduction\"\n"),
                    config_error);
    CHECK_THROWS_AS(parse_config("topology = [[\"numa\",0]]\n[scenario]\nname = \"conduction\"\n"),
                    config_error);
}

TEST_CASE("burst level deeper than the machine is rejected") {
    CHECK_THROWS_AS(parse_config(R"(
topology = [["numa",4],["core",4]]
[scenario]
name = "fibonacci"
burst_level = 3
)"),
                    config_error);
    // depth 3 machine: levels 0..2 are fine
    CHECK_NOTHROW(parse_config(R"(
topology = [["numa",4],["core",4]]
[scenario]
name = "fibonacci"
burst_level = 2
)"));
}

TEST_CASE("round trip: parse(serialize(config)) == config") {
    const char* texts[] = {
        R"(
topology = [["numa",4],["core",4]]
seed = 9
[scheduler]
kind = "opportunist"
opportunist_mode = "global"
[cost]
numa_factor = 3
[scenario]
name = "conduction"
threads = 16
cycles = 60
work = 500
)",
        R"(
topology = [["numa",2],["die",2],["core",2],["smt",2]]
[scenario]
name = "fibonacci"
n = 12
threshold = 3
bubble_mode = false
)",
        R"(
topology = [["core",2]]
until = 5000
[scenario]
name = "gang"
pairs = 3
pair_slice = 150
[output]
no_trace = true
)"};
    for (const char* text : texts) {
        run_config a = parse_config(text);
        run_config b = parse_config(serialize_config(a));
        CHECK(a == b);
        CHECK(serialize_config(a) == serialize_config(b));
    }
}

TEST_CASE("comparison config parses into three comparable runs") {
    run_config base = parse_config(R"(
topology = [["numa",4],["core",4]]
[scheduler]
opportunist_mode = "global"
[cost]
numa_factor = 3
[scenario]
name = "conduction"
threads = 16
cycles = 10
work = 500
)");
    // identical scenario instance across the three schedulers
    topology topo(base.topo);
    workload w1 = build_workload(base, topo);
    workload w2 = build_workload(base, topo);
    CHECK(w1.total_work() == w2.total_work());
    CHECK(w1.bindings == w2.bindings);

    for (const char* kind : {"bubble", "opportunist", "bound"}) {
        run_config cfg = base;
        cfg.sched.kind = kind;
        auto res = execute_run(cfg);
        CHECK(res.completed);
        CHECK(res.m.makespan > 0);
    }
}

TEST_CASE("light_group scales one NUMA group's stripes") {
    run_config cfg = parse_config(R"(
topology = [["numa",4],["core",4]]
[scenario]
name = "conduction"
threads = 16
cycles = 1
work = 400
light_group = 1
light_scale = 0.5
barrier = false
)");
    topology topo(cfg.topo);
    workload wl = build_workload(cfg, topo);
    // group 1 (threads 4..7) at half work: total = 12*400 + 4*200
    CHECK(wl.total_work() == 12 * 400 + 4 * 200);

    cfg.scenario.light_group = 7;
    CHECK_THROWS_AS(build_workload(cfg, topo), config_error);
}

TEST_CASE("explicit bindings validated against the machine") {
    CHECK_THROWS_AS(parse_config(R"(
topology = [["core",2]]
bindings = [0,5]
[scenario]
name = "conduction"
threads = 2
)"),
                    config_error);
}
