#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"

using namespace clbench;
using namespace clbench::testing;

namespace {

// Small, fast base config.
RunConfig quick(const std::string& strategy = "naive", int tasks = 5) {
    RunConfig c;
    c.strategy.kind = strategy_from_string(strategy);
    c.strategy.hidden = {16};
    c.strategy.buffer_capacity = 50;
    c.strategy.ref_batch = 32;
    c.strategy.n_fisher = 64;
    c.stream.name = "split-synth10";
    c.stream.num_tasks = tasks;
    c.stream.train_per_class = 40;
    c.stream.test_per_class = 10;
    c.replicates = 2;
    return c;
}

std::set<std::string> ids(const std::vector<Cell>& cells) {
    std::set<std::string> out;
    for (const auto& c : cells)
        out.insert(c.id);
    return out;
}

} // namespace

TEST(Stream, NameParsingAndScenario) {
    const StreamName n = parse_stream_name("nc-core50");
    EXPECT_EQ(n.construction, "nc");
    EXPECT_EQ(n.dataset, "core50");
    EXPECT_THROW(parse_stream_name("split"), ConfigError);
    EXPECT_THROW(parse_stream_name("shuffled-synth10"), ConfigError);
    EXPECT_THROW(parse_stream_name("split-nope"), ConfigError);

    StreamConfig s;
    s.name = "permuted-synth10";
    EXPECT_EQ(resolve_scenario(s), Scenario::DomainIL);
    s.name = "split-synth10";
    EXPECT_EQ(resolve_scenario(s), Scenario::ClassIL);
    s.scenario = "task-il";
    EXPECT_EQ(resolve_scenario(s), Scenario::TaskIL);
    s.name = "rotated-synth10";
    EXPECT_THROW(resolve_scenario(s), ConfigError);
}

TEST(Stream, PresetsBuild) {
    for (const auto& name : dataset_names()) {
        if (name == "mnist")
            continue;
        const SynthSpec spec = dataset_preset(name);
        EXPECT_GT(spec.num_classes(), 0) << name;
    }
    EXPECT_EQ(dataset_preset("synth100").num_classes(), 100);
    EXPECT_EQ(dataset_preset("synth200").num_classes(), 200);
    EXPECT_EQ(dataset_preset("core50").num_classes(), 50);
    EXPECT_EQ(dataset_preset("core50").num_categories, 10);
    EXPECT_THROW(dataset_preset("nope"), ConfigError);
}

TEST(RunSingle, OneTaskHasNoBwt) {
    const RunResult r = run_single(quick("naive", 1));
    ASSERT_EQ(r.replicates.size(), 2u);
    EXPECT_FALSE(r.mean_report.bwt.has_value());
    for (const auto& rep : r.replicates)
        EXPECT_FALSE(rep.report.bwt.has_value());
}

TEST(RunSingle, FiveTasksFillLowerTriangle) {
    const RunResult r = run_single(quick("naive", 5));
    EXPECT_EQ(r.num_tasks, 5);
    EXPECT_EQ(r.num_classes, 10);
    EXPECT_EQ(r.scenario, Scenario::ClassIL);
    for (const auto& rep : r.replicates) {
        int defined = 0;
        for (int i = 0; i < 5; ++i)
            defined += rep.matrix.defined_in_row(i);
        EXPECT_EQ(defined, 15);
        ASSERT_TRUE(rep.report.bwt.has_value());
        ASSERT_EQ(rep.report.timing.size(), 5u);
        for (const auto& t : rep.report.timing) {
            EXPECT_EQ(t.gradient_steps, 2); // 80 samples, batch 64
            EXPECT_EQ(t.wall_seconds, 0.0); // not recorded unless asked
        }
    }
    EXPECT_TRUE(r.audit_log.empty());
    EXPECT_TRUE(r.online());
}

TEST(RunSingle, ReplicateMeanMatchesReplicates) {
    const RunResult r = run_single(quick("ewc", 2));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j <= i; ++j) {
            double s = 0;
            for (const auto& rep : r.replicates)
                s += rep.matrix.value(i, j);
            EXPECT_NEAR(r.mean.value(i, j), s / r.replicates.size(), 1e-12);
        }
    EXPECT_NE(r.replicates[0].seed, r.replicates[1].seed);
    EXPECT_EQ(r.replicates[0].seed, replicate_seed(r.config.seed, 0));
}

TEST(RunSingle, DeterministicAcrossRuns) {
    const RunResult a = run_single(quick("gss", 2));
    const RunResult b = run_single(quick("gss", 2));
    for (std::size_t r = 0; r < a.replicates.size(); ++r)
        EXPECT_EQ(a.replicates[r].matrix, b.replicates[r].matrix);
    EXPECT_EQ(a.stream_hash, b.stream_hash);
}

TEST(RunSingle, TaskIlAtLeastClassIl) {
    // same model, with and without the task label at test time
    for (const char* s : {"naive", "lwf", "agem"}) {
        const RunResult r = run_single(quick(s, 5));
        for (const auto& rep : r.replicates) {
            ASSERT_TRUE(rep.task_il_matrix.has_value());
            for (int j = 0; j < 5; ++j)
                EXPECT_GE(rep.task_il_matrix->value(4, j), rep.matrix.value(4, j)) << s;
        }
    }
}

TEST(RunSingle, BufferClampedToStream) {
    RunConfig c = quick("agem", 5);
    c.strategy.buffer_capacity = 5000;
    const RunResult r = run_single(c);
    EXPECT_EQ(r.effective_buffer, 400);
    ASSERT_EQ(r.notes.size(), 1u);
    for (const auto& rep : r.replicates)
        EXPECT_LE(rep.memory_size, 400u);

    RunConfig g = quick("gss", 5);
    const RunResult rg = run_single(g);
    for (const auto& rep : rg.replicates)
        EXPECT_LE(rep.memory_size, 50u);
}

TEST(RunSingle, WallClockOnlyWhenAsked) {
    RunConfig c = quick("naive", 2);
    c.replicates = 1;
    c.record_wallclock = true;
    const RunResult r = run_single(c);
    for (const auto& t : r.replicates[0].report.timing)
        EXPECT_GT(t.wall_seconds, 0.0);
}

TEST(RunSingle, HatOnClassIlRejected) {
    RunConfig c = quick("hat", 5);
    EXPECT_THROW(run_single(c), ConfigError);
    c.stream.scenario = "task-il";
    const RunResult r = run_single(c);
    EXPECT_EQ(r.scenario, Scenario::TaskIL);
    EXPECT_FALSE(r.replicates[0].task_il_matrix.has_value());
}

TEST(Plans, AdaptabilityLengths) {
    RunConfig b = quick();
    GridPlan p = plan_adaptability(b);
    EXPECT_EQ(p.axis, "num_tasks");
    EXPECT_EQ(p.axis_values, (std::vector<std::string>{"1", "2", "5"}));
    // hat is switched to task-il rather than dropped
    EXPECT_EQ(p.cells.size(), 8u * 3u);
    for (const auto& c : p.cells)
        if (c.config.strategy.kind == StrategyKind::HAT) {
            EXPECT_EQ(c.config.stream.scenario, "task-il");
            EXPECT_FALSE(c.notes.empty());
        }

    b.stream.name = "split-synth100";
    p = plan_adaptability(b);
    EXPECT_EQ(p.axis_values, (std::vector<std::string>{"1", "2", "4", "5", "10", "20", "25", "50"}));

    b.values = {3, 5};
    b.strategies = {"naive"};
    b.stream.name = "split-synth10";
    p = plan_adaptability(b);
    EXPECT_EQ(p.cells.size(), 1u);
    ASSERT_EQ(p.planned_failures.size(), 1u);
    EXPECT_NE(p.planned_failures[0].failure->find("not divisible"), std::string::npos);
}

TEST(Plans, ScenariosOmitHatOutsideTaskIl) {
    RunConfig b = quick();
    const GridPlan p = plan_sensitivity_scenarios(b);
    EXPECT_EQ(p.benchmarks.size(), 6u);
    // 4 split streams x 8 strategies x {class, task} minus hat/class, 2 domain streams x 7
    EXPECT_EQ(p.cells.size(), 4u * 15u + 2u * 7u);
    EXPECT_EQ(p.omitted.size(), 4u + 2u);
    for (const auto& c : p.cells) {
        if (c.config.strategy.kind == StrategyKind::HAT) {
            EXPECT_EQ(c.axes.at("scenario"), "task-il");
        }
        EXPECT_EQ(c.config.stream.num_tasks, 5);
    }
    EXPECT_EQ(ids(p.cells).size(), p.cells.size());
}

TEST(Plans, GranularityTaskCounts) {
    RunConfig b = quick();
    b.strategies = {"naive", "icarl"};
    const GridPlan p = plan_sensitivity_granularity(b);
    EXPECT_EQ(p.cells.size(), 3u * 2u * 2u);
    for (const auto& c : p.cells) {
        const bool ni = c.config.stream.name.rfind("ni-", 0) == 0;
        EXPECT_EQ(c.config.stream.num_tasks, ni ? 8 : 9);
    }
    // class counts follow the granularity
    EXPECT_EQ(detail::dataset_class_count("nc-core50", Granularity::Category), 10);
    EXPECT_EQ(detail::dataset_class_count("nc-core50", Granularity::Object), 50);
    RunConfig one = b;
    one.stream.name = "nc-core50";
    one.stream.num_tasks = 9;
    one.stream.granularity = Granularity::Category;
    EXPECT_EQ(build_stream(one.stream).num_classes, 10);
    one.stream.granularity = Granularity::Object;
    EXPECT_EQ(build_stream(one.stream).num_classes, 50);
}

TEST(Plans, BufferGridIsOnlineReplayOnly) {
    RunConfig b = quick();
    b.strategy.epochs = 7;
    b.strategies = {"naive", "agem", "gss"};
    const GridPlan p = plan_efficiency_buffer(b);
    EXPECT_EQ(p.strategies, (std::vector<std::string>{"agem", "gss"}));
    ASSERT_EQ(p.omitted.size(), 1u);
    EXPECT_EQ(p.axis_values.size(), 7u);
    EXPECT_EQ(p.cells.size(), 3u * 2u * 7u);
    for (const auto& c : p.cells) {
        EXPECT_EQ(c.config.strategy.epochs, 1);
        EXPECT_EQ(c.config.stream.num_tasks, 5);
    }
}

TEST(Plans, EpochGrid) {
    RunConfig b = quick();
    b.strategies = {"naive", "si"};
    const GridPlan p = plan_efficiency_epochs(b);
    EXPECT_EQ(p.axis_values, (std::vector<std::string>{"1", "5", "10", "20", "50", "100"}));
    EXPECT_EQ(p.cells.size(), 12u);
    for (const auto& c : p.cells)
        EXPECT_EQ(c.config.strategy.epochs, std::stoi(c.axes.at("epochs")));
}

TEST(Trends, Monotonicity) {
    EXPECT_EQ(monotonicity({0.5}), "single_point");
    EXPECT_EQ(monotonicity({0.1, 0.2, 0.3}), "strictly_increasing");
    EXPECT_EQ(monotonicity({0.3, 0.2, 0.2}), "non_increasing");
    EXPECT_EQ(monotonicity({0.2, 0.2}), "constant");
    EXPECT_EQ(monotonicity({0.2, 0.3, 0.1}), "mixed");
}

TEST(Grid, RunsCellsAndRecordsFailures) {
    RunConfig b = quick();
    b.protocol = ProtocolKind::Epochs;
    b.strategies = {"naive", "agem"};
    b.values = {1, 2};
    b.replicates = 1;
    const GridResult g = run_grid(plan_grid(b), 2);
    ASSERT_EQ(g.cells.size(), 4u);
    EXPECT_EQ(g.failure_count(), 0u);
    EXPECT_TRUE(g.audit_log().empty());
    for (const auto& c : g.cells)
        EXPECT_EQ(c.result->online(), c.cell.config.strategy.epochs == 1);

    const TrendSummary t = summarize_trends(g.plan, g.cells);
    ASSERT_EQ(t.series.size(), 2u);
    for (const auto& s : t.series) {
        EXPECT_EQ(s.points.size(), 2u);
        EXPECT_EQ(s.acc_deltas.size(), 1u);
    }

    RunConfig bad = quick("naive");
    bad.protocol = ProtocolKind::Adaptability;
    bad.values = {3};
    bad.strategies = {"naive"};
    bad.replicates = 1;
    const GridResult gb = run_grid(plan_grid(bad), 1);
    EXPECT_EQ(gb.failure_count(), 1u);
}

TEST(Grid, WorkerCountDoesNotChangeResults) {
    RunConfig b = quick();
    b.protocol = ProtocolKind::Buffer;
    b.strategies = {"agem", "gss"};
    b.benchmarks = {"split-synth10"};
    b.values = {20, 60};
    b.replicates = 1;
    const GridPlan p = plan_grid(b);
    const GridResult one = run_grid(p, 1);
    const GridResult three = run_grid(p, 3);
    ASSERT_EQ(one.cells.size(), three.cells.size());
    for (std::size_t i = 0; i < one.cells.size(); ++i) {
        EXPECT_EQ(one.cells[i].cell.id, three.cells[i].cell.id);
        EXPECT_EQ(one.cells[i].result->replicates[0].matrix, three.cells[i].result->replicates[0].matrix);
    }
}
