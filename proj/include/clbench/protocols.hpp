#pragma once

// Evaluation protocols: a single sequential run (train task i, evaluate tasks 0..i) and
// the desiderata grids built from it (sequence length, scenario, granularity, buffer
// size, epochs).

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "clbench/audit.hpp"
#include "clbench/config.hpp"
#include "clbench/data.hpp"
#include "clbench/metrics.hpp"
#include "clbench/scenarios.hpp"
#include "clbench/strategy.hpp"

namespace clbench {

// ---------------------------------------------------------------------------
// Datasets and streams

/// Synthetic stand-ins for the benchmark datasets, keyed by name.
inline SynthSpec dataset_preset(const std::string& name) {
    SynthSpec s;
    s.name = name;
    if (name == "synth10") { // 10-class digit-scale stand-in
        s.num_categories = 10;
        s.species_per_category = 1;
        s.category_spread = 1.5;
        s.species_spread = 0.5;
        s.noise_sigma = 1.0;
        s.seed = 101;
    } else if (name == "synth10b") { // harder 10-class object-scale stand-in
        s.num_categories = 10;
        s.species_per_category = 1;
        s.category_spread = 1.2;
        s.species_spread = 0.5;
        s.noise_sigma = 1.0;
        s.seed = 102;
    } else if (name == "synth100") { // 20 coarse groups x 5 fine classes
        s.num_categories = 20;
        s.species_per_category = 5;
        s.category_spread = 3.0;
        s.species_spread = 1.5;
        s.noise_sigma = 1.5;
        s.seed = 103;
    } else if (name == "synth200") {
        s.num_categories = 40;
        s.species_per_category = 5;
        s.category_spread = 3.0;
        s.species_spread = 1.5;
        s.noise_sigma = 1.5;
        s.seed = 104;
    } else if (name == "core50") { // 10 categories x 5 objects
        s.num_categories = 10;
        s.species_per_category = 5;
        s.category_spread = 3.0;
        s.species_spread = 1.5;
        s.noise_sigma = 1.5;
        s.seed = 105;
    } else if (name == "imagenet50") { // 10 animal categories x 5 species, closer species
        s.num_categories = 10;
        s.species_per_category = 5;
        s.category_spread = 3.0;
        s.species_spread = 1.0;
        s.noise_sigma = 1.5;
        s.seed = 106;
    } else {
        throw ConfigError("unknown dataset '" + name +
                          "' (expected synth10, synth10b, synth100, synth200, core50, imagenet50 or mnist)");
    }
    return s;
}

inline const std::vector<std::string>& dataset_names() {
    static const std::vector<std::string> names = {"synth10", "synth10b", "synth100", "synth200",
                                                   "core50",  "imagenet50", "mnist"};
    return names;
}

inline std::shared_ptr<const DataSplit> load_dataset(const std::string& name, int train_per_class,
                                                     int test_per_class) {
    static std::mutex mu;
    static std::map<std::string, std::shared_ptr<const DataSplit>> cache;
    const std::string key = name + "/" + std::to_string(train_per_class) + "/" + std::to_string(test_per_class);
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end())
        return it->second;
    std::shared_ptr<const DataSplit> data;
    if (name == "mnist") {
        const char* dir = std::getenv("CLBENCH_DATA_DIR");
        if (!dir)
            throw ConfigError("dataset mnist needs CLBENCH_DATA_DIR pointing at the IDX files");
        data = std::make_shared<const DataSplit>(load_mnist(dir));
    } else {
        SynthSpec s = dataset_preset(name);
        if (train_per_class > 0)
            s.train_per_class = train_per_class;
        if (test_per_class > 0)
            s.test_per_class = test_per_class;
        data = std::make_shared<const DataSplit>(synth_generate(s));
    }
    cache.emplace(key, data);
    return data;
}

struct StreamName {
    std::string construction;
    std::string dataset;
};

inline StreamName parse_stream_name(const std::string& name) {
    const auto dash = name.find('-');
    if (dash == std::string::npos)
        throw ConfigError("stream name '" + name + "' is not <construction>-<dataset>");
    StreamName s{name.substr(0, dash), name.substr(dash + 1)};
    static const std::set<std::string> constructions = {"split", "permuted", "rotated", "nc", "ni"};
    if (!constructions.count(s.construction))
        throw ConfigError("unknown stream construction '" + s.construction +
                          "' (expected split, permuted, rotated, nc or ni)");
    if (std::find(dataset_names().begin(), dataset_names().end(), s.dataset) == dataset_names().end())
        throw ConfigError("unknown dataset '" + s.dataset + "' in stream '" + name + "'");
    return s;
}

inline Scenario resolve_scenario(const StreamConfig& c) {
    const StreamName n = parse_stream_name(c.name);
    const bool domain = n.construction == "permuted" || n.construction == "rotated" || n.construction == "ni";
    if (c.scenario == "auto")
        return domain ? Scenario::DomainIL : Scenario::ClassIL;
    const Scenario s = scenario_from_string(c.scenario);
    if (domain && s != Scenario::DomainIL)
        throw ConfigError("stream '" + c.name + "' is domain-il only");
    if (!domain && s == Scenario::DomainIL)
        throw ConfigError("stream '" + c.name + "' is class-il or task-il");
    return s;
}

inline TaskStream build_stream(const StreamConfig& c) {
    const StreamName n = parse_stream_name(c.name);
    const Scenario scenario = resolve_scenario(c);
    const auto data = load_dataset(n.dataset, c.train_per_class, c.test_per_class);
    TaskStream s;
    if (n.construction == "split")
        s = split_by_classes(*data, c.num_tasks, scenario, c.seed);
    else if (n.construction == "permuted")
        s = make_permuted_stream(*data, c.num_tasks, c.seed);
    else if (n.construction == "rotated")
        s = make_rotated_stream(*data, c.num_tasks, c.max_angle, c.seed);
    else if (n.construction == "nc")
        s = make_nc_stream(*data, c.granularity, c.num_tasks, scenario);
    else
        s = make_ni_stream(*data, c.num_tasks, c.seed, c.granularity,
                           n.dataset == "mnist" ? 0.0 : c.session_shift);
    s.name = c.name;
    return s;
}

// ---------------------------------------------------------------------------
// Single run

struct ReplicateResult {
    std::uint64_t seed = 0;
    AccuracyMatrix matrix;
    /// Same trained model evaluated with task labels (class-il streams only).
    std::optional<AccuracyMatrix> task_il_matrix;
    MetricReport report;
    std::size_t memory_size = 0;
};

struct RunResult {
    RunConfig config;
    std::string stream_name;
    Scenario scenario = Scenario::ClassIL;
    int num_tasks = 0;
    int num_classes = 0;
    std::string stream_hash;
    int effective_buffer = 0;
    std::vector<ReplicateResult> replicates;
    AccuracyMatrix mean;
    MetricReport mean_report;
    std::vector<std::string> notes;
    std::vector<std::string> audit_log;

    bool online() const { return config.strategy.epochs == 1; }
};

inline std::uint64_t replicate_seed(std::uint64_t base, int r) {
    return derive_seed(base, "replicate-" + std::to_string(r));
}

inline double accuracy_of(const std::vector<int>& pred, const std::vector<int>& labels) {
    if (labels.empty())
        throw StateError("empty test split");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        hit += pred[i] == labels[i];
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

/// Trains the stream's tasks strictly in order; after task i, evaluates tasks 0..i.
/// `stream` may be supplied to skip construction from cfg.stream.
inline RunResult run_single(const RunConfig& cfg_in, const TaskStream* prebuilt = nullptr) {
    RunConfig cfg = cfg_in;
    validate(cfg);
    TaskStream built;
    if (!prebuilt) {
        built = build_stream(cfg.stream);
        prebuilt = &built;
    }
    const TaskStream& stream = *prebuilt;
    check_compatible(cfg.strategy.kind, stream.scenario);

    RunResult res;
    res.stream_name = stream.name;
    res.scenario = stream.scenario;
    res.num_tasks = stream.num_tasks();
    res.num_classes = stream.num_classes;
    res.stream_hash = hex64(stream_hash(stream));

    if (uses_replay(cfg.strategy.kind)) {
        std::size_t total = 0;
        for (const Task& t : stream.tasks)
            total += static_cast<std::size_t>(t.train.size());
        if (static_cast<std::size_t>(cfg.strategy.buffer_capacity) > total) {
            res.notes.push_back("buffer_capacity " + std::to_string(cfg.strategy.buffer_capacity) +
                                " clamped to " + std::to_string(total) + " train samples");
            cfg.strategy.buffer_capacity = static_cast<int>(total);
        }
        res.effective_buffer = cfg.strategy.buffer_capacity;
    }
    res.config = cfg_in;

    const int T = stream.num_tasks();
    std::vector<AccuracyMatrix> mats;
    for (int r = 0; r < cfg.replicates; ++r) {
        ReplicateResult rep;
        rep.seed = replicate_seed(cfg.seed, r);
        rep.matrix = AccuracyMatrix(T);
        if (stream.scenario == Scenario::ClassIL)
            rep.task_il_matrix = AccuracyMatrix(T);
        Learner learner(cfg.strategy, stream.input_dim(), stream.num_classes, stream.scenario, rep.seed);
        AccessAuditor auditor;
        std::vector<TaskTiming> timing;
        for (int i = 0; i < T; ++i) {
            const Task& task = stream.tasks[static_cast<std::size_t>(i)];
            auditor.set_current(task.task_id);
            const long long steps_before = learner.gradient_steps();
            const auto t0 = std::chrono::steady_clock::now();
            learner.train_task(TaskView(task, &auditor));
            const auto t1 = std::chrono::steady_clock::now();
            auditor.set_current(-1);
            timing.push_back({cfg.record_wallclock ? std::chrono::duration<double>(t1 - t0).count() : 0.0,
                              learner.gradient_steps() - steps_before});
            for (int j = 0; j <= i; ++j) {
                const Task& eval = stream.tasks[static_cast<std::size_t>(j)];
                std::optional<int> hint;
                if (stream.provides_task_labels_at_test())
                    hint = eval.task_id;
                rep.matrix.record(i, j, accuracy_of(learner.predict_batch(eval.test.features, hint), eval.test.labels));
                if (rep.task_il_matrix)
                    rep.task_il_matrix->record(
                        i, j, accuracy_of(learner.predict_batch(eval.test.features, eval.task_id), eval.test.labels));
            }
        }
        for (auto& line : auditor.log())
            res.audit_log.push_back(line);
        rep.memory_size = learner.memory_size();
        rep.report = make_report(rep.matrix, std::move(timing));
        mats.push_back(rep.matrix);
        res.replicates.push_back(std::move(rep));
    }
    res.mean = mean_matrix(mats);
    res.mean_report = make_report(res.mean);
    return res;
}

// ---------------------------------------------------------------------------
// Grids

struct Cell {
    std::string id;
    std::map<std::string, std::string> axes;
    RunConfig config;
    std::vector<std::string> notes;
};

struct CellOutcome {
    Cell cell;
    std::optional<RunResult> result;
    std::optional<std::string> failure;
};

struct Omission {
    std::string id;
    std::string reason;
};

struct GridPlan {
    ProtocolKind kind = ProtocolKind::Single;
    std::string axis;                  // the swept quantity
    std::vector<std::string> axis_values;
    std::vector<std::string> strategies;
    std::vector<std::string> benchmarks;
    std::vector<Cell> cells;
    std::vector<CellOutcome> planned_failures; // infeasible before running
    std::vector<Omission> omitted;
    RunConfig base;
};

struct TrendPoint {
    std::string axis_value;
    double x = 0; // numeric axis value, or position for categorical axes
    double acc = 0;
    std::optional<double> bwt;
};

struct TrendSeries {
    std::string key; // strategy plus every fixed descriptor
    std::string strategy;
    std::vector<TrendPoint> points;
    std::string acc_verdict;
    std::vector<double> acc_deltas;
};

struct TrendSummary {
    std::string axis;
    std::vector<TrendSeries> series;
};

struct GridResult {
    GridPlan plan;
    std::vector<CellOutcome> cells; // plan order, planned failures appended
    TrendSummary trends;

    std::size_t failure_count() const {
        std::size_t n = 0;
        for (const auto& c : cells)
            n += c.failure.has_value();
        return n;
    }
    std::vector<std::string> audit_log() const {
        std::vector<std::string> out;
        for (const auto& c : cells)
            if (c.result)
                out.insert(out.end(), c.result->audit_log.begin(), c.result->audit_log.end());
        return out;
    }
};

namespace detail {

inline std::string axis_number(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15)
        return std::to_string(static_cast<long long>(v));
    return format_double(v);
}

inline std::string cell_id(const std::map<std::string, std::string>& axes) {
    static const std::vector<std::string> order = {"benchmark", "scenario", "granularity", "strategy",
                                                   "num_tasks", "buffer_size", "epochs"};
    std::string id;
    for (const auto& k : order) {
        auto it = axes.find(k);
        if (it == axes.end())
            continue;
        if (!id.empty())
            id += "__";
        if (k == "benchmark" || k == "strategy" || k == "scenario" || k == "granularity")
            id += it->second;
        else
            id += k + "-" + it->second;
    }
    for (char& c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
            c = '_';
    return id;
}

inline std::vector<std::string> strategies_or(const RunConfig& base, std::vector<std::string> dflt) {
    return base.strategies.empty() ? dflt : base.strategies;
}

inline std::vector<std::string> all_strategy_names() {
    std::vector<std::string> out;
    for (StrategyKind k : all_strategy_kinds())
        out.push_back(to_string(k));
    return out;
}

inline std::vector<int> default_lengths(int num_classes) {
    if (num_classes == 10)
        return {1, 2, 5};
    if (num_classes == 100)
        return {1, 2, 4, 5, 10, 20, 25, 50};
    if (num_classes == 200)
        return {5, 10, 20, 50};
    std::vector<int> out;
    for (int t = 1; t <= std::min(num_classes, 50); ++t)
        if (num_classes % t == 0)
            out.push_back(t);
    return out;
}

inline int dataset_class_count(const std::string& stream_name, Granularity g) {
    const StreamName n = parse_stream_name(stream_name);
    if (n.dataset == "mnist")
        return 10;
    const SynthSpec s = dataset_preset(n.dataset);
    return g == Granularity::Category ? s.num_categories : s.num_classes();
}

inline Cell make_cell(RunConfig cfg, std::map<std::string, std::string> axes) {
    cfg.protocol = ProtocolKind::Single;
    cfg.strategies.clear();
    cfg.values.clear();
    cfg.benchmarks.clear();
    cfg.workers = 1;
    Cell c;
    c.id = cell_id(axes);
    c.axes = std::move(axes);
    c.config = std::move(cfg);
    return c;
}

/// Applies a strategy to a cell config. HAT on a class-il stream runs under task-il;
/// returns false when the pairing is impossible (HAT on domain-il).
inline bool assign_strategy(RunConfig& cfg, const std::string& name, std::vector<std::string>& notes) {
    cfg.strategy.kind = strategy_from_string(name);
    if (cfg.strategy.kind != StrategyKind::HAT)
        return true;
    const Scenario s = resolve_scenario(cfg.stream);
    if (s == Scenario::DomainIL)
        return false;
    if (s == Scenario::ClassIL) {
        cfg.stream.scenario = "task-il";
        notes.push_back("hat evaluated under task-il");
    }
    return true;
}

inline CellOutcome infeasible(Cell cell, std::string reason) {
    CellOutcome o;
    o.cell = std::move(cell);
    o.failure = std::move(reason);
    return o;
}

} // namespace detail

/// Cells over (strategy x sequence length) on one benchmark.
inline GridPlan plan_adaptability(const RunConfig& base) {
    GridPlan p;
    p.kind = ProtocolKind::Adaptability;
    p.axis = "num_tasks";
    p.base = base;
    p.benchmarks = {base.stream.name};
    p.strategies = detail::strategies_or(base, detail::all_strategy_names());
    const int classes = detail::dataset_class_count(base.stream.name, base.stream.granularity);
    std::vector<int> lengths;
    if (base.values.empty())
        lengths = detail::default_lengths(classes);
    else
        for (double v : base.values)
            lengths.push_back(static_cast<int>(v));
    for (int T : lengths)
        p.axis_values.push_back(std::to_string(T));
    for (const auto& s : p.strategies)
        for (int T : lengths) {
            RunConfig cfg = base;
            cfg.stream.num_tasks = T;
            std::vector<std::string> notes;
            std::map<std::string, std::string> axes = {
                {"benchmark", base.stream.name}, {"strategy", s}, {"num_tasks", std::to_string(T)}};
            if (!detail::assign_strategy(cfg, s, notes)) {
                p.omitted.push_back({detail::cell_id(axes), "hat requires task labels"});
                continue;
            }
            Cell cell = detail::make_cell(cfg, axes);
            cell.notes = notes;
            if (classes % T != 0) {
                p.planned_failures.push_back(detail::infeasible(
                    cell, std::to_string(classes) + " classes are not divisible into " + std::to_string(T) + " tasks"));
                continue;
            }
            p.cells.push_back(std::move(cell));
        }
    return p;
}

/// Class-il and task-il cells on split streams, domain-il cells on permuted/rotated streams.
inline GridPlan plan_sensitivity_scenarios(const RunConfig& base) {
    GridPlan p;
    p.kind = ProtocolKind::Scenarios;
    p.axis = "scenario";
    p.base = base;
    p.strategies = detail::strategies_or(base, detail::all_strategy_names());
    const bool have_mnist = std::getenv("CLBENCH_DATA_DIR") != nullptr;
    p.benchmarks = base.benchmarks.empty()
                       ? std::vector<std::string>{have_mnist ? "split-mnist" : "split-synth10", "split-synth10b",
                                                  "split-synth100", "split-synth200",
                                                  have_mnist ? "permuted-mnist" : "permuted-synth10",
                                                  have_mnist ? "rotated-mnist" : "rotated-synth10"}
                       : base.benchmarks;
    p.axis_values = {"class-il", "task-il", "domain-il"};
    const int T = base.values.empty() ? 5 : static_cast<int>(base.values.front());
    for (const auto& bench : p.benchmarks) {
        const StreamName n = parse_stream_name(bench);
        const bool domain = n.construction == "permuted" || n.construction == "rotated" || n.construction == "ni";
        const std::vector<std::string> scenarios =
            domain ? std::vector<std::string>{"domain-il"} : std::vector<std::string>{"class-il", "task-il"};
        for (const auto& s : p.strategies)
            for (const auto& sc : scenarios) {
                RunConfig cfg = base;
                cfg.stream.name = bench;
                cfg.stream.num_tasks = T;
                cfg.stream.scenario = sc;
                cfg.strategy.kind = strategy_from_string(s);
                std::map<std::string, std::string> axes = {{"benchmark", bench}, {"strategy", s}, {"scenario", sc}};
                if (cfg.strategy.kind == StrategyKind::HAT && sc != "task-il") {
                    p.omitted.push_back({detail::cell_id(axes), "hat is evaluated only under task-il"});
                    continue;
                }
                p.cells.push_back(detail::make_cell(cfg, axes));
            }
    }
    return p;
}

/// {NC, NI} x {category, object} on the CORe50-like set, NC only on the ImageNet50-like set.
inline GridPlan plan_sensitivity_granularity(const RunConfig& base) {
    GridPlan p;
    p.kind = ProtocolKind::Granularity;
    p.axis = "granularity";
    p.base = base;
    p.strategies = detail::strategies_or(base, detail::all_strategy_names());
    p.benchmarks = base.benchmarks.empty() ? std::vector<std::string>{"nc-core50", "ni-core50", "nc-imagenet50"}
                                           : base.benchmarks;
    p.axis_values = {"category", "object"};
    for (const auto& bench : p.benchmarks) {
        const StreamName n = parse_stream_name(bench);
        const int T = n.construction == "ni" ? 8 : 9;
        for (const auto& s : p.strategies)
            for (Granularity g : {Granularity::Category, Granularity::Object}) {
                RunConfig cfg = base;
                cfg.stream.name = bench;
                cfg.stream.num_tasks = T;
                cfg.stream.scenario = "auto";
                cfg.stream.granularity = g;
                std::vector<std::string> notes;
                std::map<std::string, std::string> axes = {
                    {"benchmark", bench}, {"strategy", s}, {"granularity", to_string(g)}};
                if (!detail::assign_strategy(cfg, s, notes)) {
                    p.omitted.push_back({detail::cell_id(axes), "hat requires task labels"});
                    continue;
                }
                Cell cell = detail::make_cell(cfg, axes);
                cell.notes = notes;
                p.cells.push_back(std::move(cell));
            }
    }
    return p;
}

inline const std::vector<int>& buffer_grid_sizes() {
    static const std::vector<int> sizes = {100, 300, 500, 700, 1000, 2000, 5000};
    return sizes;
}

inline const std::vector<int>& epoch_grid_values() {
    static const std::vector<int> values = {1, 5, 10, 20, 50, 100};
    return values;
}

/// Replay strategies x buffer sizes, one epoch per task, on 5-task streams.
inline GridPlan plan_efficiency_buffer(const RunConfig& base) {
    GridPlan p;
    p.kind = ProtocolKind::Buffer;
    p.axis = "buffer_size";
    p.base = base;
    for (const auto& s : detail::strategies_or(base, {"icarl", "agem", "gss"})) {
        if (uses_replay(strategy_from_string(s)))
            p.strategies.push_back(s);
        else
            p.omitted.push_back({s, "buffer grid covers replay strategies only"});
    }
    const bool have_mnist = std::getenv("CLBENCH_DATA_DIR") != nullptr;
    p.benchmarks = base.benchmarks.empty()
                       ? std::vector<std::string>{have_mnist ? "split-mnist" : "split-synth10", "split-synth10b",
                                                  "split-synth100"}
                       : base.benchmarks;
    std::vector<int> sizes = buffer_grid_sizes();
    if (!base.values.empty()) {
        sizes.clear();
        for (double v : base.values)
            sizes.push_back(static_cast<int>(v));
    }
    for (int b : sizes)
        p.axis_values.push_back(std::to_string(b));
    for (const auto& bench : p.benchmarks)
        for (const auto& s : p.strategies)
            for (int b : sizes) {
                RunConfig cfg = base;
                cfg.stream.name = bench;
                cfg.stream.num_tasks = 5;
                cfg.stream.scenario = "auto";
                cfg.strategy.kind = strategy_from_string(s);
                cfg.strategy.buffer_capacity = b;
                cfg.strategy.epochs = 1;
                p.cells.push_back(detail::make_cell(
                    cfg, {{"benchmark", bench}, {"strategy", s}, {"buffer_size", std::to_string(b)}}));
            }
    return p;
}

/// Every strategy x epochs per task.
inline GridPlan plan_efficiency_epochs(const RunConfig& base) {
    GridPlan p;
    p.kind = ProtocolKind::Epochs;
    p.axis = "epochs";
    p.base = base;
    p.strategies = detail::strategies_or(base, detail::all_strategy_names());
    p.benchmarks = base.benchmarks.empty() ? std::vector<std::string>{base.stream.name} : base.benchmarks;
    std::vector<int> epochs = epoch_grid_values();
    if (!base.values.empty()) {
        epochs.clear();
        for (double v : base.values)
            epochs.push_back(static_cast<int>(v));
    }
    for (int e : epochs)
        p.axis_values.push_back(std::to_string(e));
    for (const auto& bench : p.benchmarks)
        for (const auto& s : p.strategies)
            for (int e : epochs) {
                RunConfig cfg = base;
                cfg.stream.name = bench;
                cfg.strategy.epochs = e;
                std::vector<std::string> notes;
                std::map<std::string, std::string> axes = {
                    {"benchmark", bench}, {"strategy", s}, {"epochs", std::to_string(e)}};
                if (!detail::assign_strategy(cfg, s, notes)) {
                    p.omitted.push_back({detail::cell_id(axes), "hat requires task labels"});
                    continue;
                }
                Cell cell = detail::make_cell(cfg, axes);
                cell.notes = notes;
                p.cells.push_back(std::move(cell));
            }
    return p;
}

inline GridPlan plan_single(const RunConfig& base) {
    GridPlan p;
    p.kind = ProtocolKind::Single;
    p.axis = "strategy";
    p.base = base;
    p.strategies = {to_string(base.strategy.kind)};
    p.benchmarks = {base.stream.name};
    p.axis_values = p.strategies;
    p.cells.push_back(detail::make_cell(base, {{"benchmark", base.stream.name}, {"strategy", p.strategies[0]}}));
    return p;
}

inline GridPlan plan_grid(const RunConfig& base) {
    validate(base);
    switch (base.protocol) {
    case ProtocolKind::Single: return plan_single(base);
    case ProtocolKind::Adaptability: return plan_adaptability(base);
    case ProtocolKind::Scenarios: return plan_sensitivity_scenarios(base);
    case ProtocolKind::Granularity: return plan_sensitivity_granularity(base);
    case ProtocolKind::Buffer: return plan_efficiency_buffer(base);
    case ProtocolKind::Epochs: return plan_efficiency_epochs(base);
    }
    throw ConfigError("unknown protocol");
}

inline std::string monotonicity(const std::vector<double>& v) {
    if (v.size() < 2)
        return "single_point";
    bool inc = true, dec = true, sinc = true, sdec = true;
    for (std::size_t i = 1; i < v.size(); ++i) {
        inc = inc && v[i] >= v[i - 1];
        dec = dec && v[i] <= v[i - 1];
        sinc = sinc && v[i] > v[i - 1];
        sdec = sdec && v[i] < v[i - 1];
    }
    if (sinc) return "strictly_increasing";
    if (sdec) return "strictly_decreasing";
    if (inc && dec) return "constant";
    if (inc) return "non_decreasing";
    if (dec) return "non_increasing";
    return "mixed";
}

inline TrendSummary summarize_trends(const GridPlan& plan, const std::vector<CellOutcome>& cells) {
    TrendSummary t;
    t.axis = plan.axis;
    std::map<std::string, TrendSeries> by_key;
    for (const auto& c : cells) {
        if (!c.result)
            continue;
        auto ax = c.cell.axes.find(plan.axis);
        if (ax == c.cell.axes.end())
            continue;
        std::string key;
        for (const auto& [k, v] : c.cell.axes)
            if (k != plan.axis)
                key += (key.empty() ? "" : " ") + k + "=" + v;
        auto& s = by_key[key];
        s.key = key;
        s.strategy = c.cell.axes.at("strategy");
        TrendPoint pt;
        pt.axis_value = ax->second;
        auto pos = std::find(plan.axis_values.begin(), plan.axis_values.end(), ax->second);
        pt.x = pos != plan.axis_values.end() ? static_cast<double>(pos - plan.axis_values.begin()) : 0.0;
        if (plan.axis == "num_tasks" || plan.axis == "buffer_size" || plan.axis == "epochs")
            pt.x = std::stod(ax->second);
        pt.acc = c.result->mean_report.acc;
        pt.bwt = c.result->mean_report.bwt;
        s.points.push_back(pt);
    }
    for (auto& [k, s] : by_key) {
        std::sort(s.points.begin(), s.points.end(), [](const auto& a, const auto& b) { return a.x < b.x; });
        std::vector<double> accs;
        for (const auto& p : s.points)
            accs.push_back(p.acc);
        s.acc_verdict = monotonicity(accs);
        for (std::size_t i = 1; i < accs.size(); ++i)
            s.acc_deltas.push_back(accs[i] - accs[i - 1]);
        t.series.push_back(std::move(s));
    }
    return t;
}

/// Runs every planned cell on up to `workers` threads. `on_cell` is called (serialized)
/// as each cell finishes; `skip` lets a resumed run reuse finished cells.
inline GridResult run_grid(const GridPlan& plan, int workers,
                           const std::function<void(const CellOutcome&)>& on_cell = {},
                           const std::function<std::optional<CellOutcome>(const Cell&)>& skip = {}) {
    GridResult g;
    g.plan = plan;
    std::vector<CellOutcome> outcomes(plan.cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= plan.cells.size())
                return;
            const Cell& cell = plan.cells[i];
            CellOutcome out;
            bool reused = false;
            if (skip) {
                if (auto prior = skip(cell)) {
                    out = std::move(*prior);
                    reused = true;
                }
            }
            if (!reused) {
                out.cell = cell;
                try {
                    out.result = run_single(cell.config);
                    out.result->notes.insert(out.result->notes.begin(), cell.notes.begin(), cell.notes.end());
                } catch (const std::exception& e) {
                    out.failure = e.what();
                }
            }
            std::lock_guard lock(mu);
            if (on_cell && !reused)
                on_cell(out);
            outcomes[i] = std::move(out);
        }
    };
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(plan.cells.size())));
    if (n == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < n; ++k)
            pool.emplace_back(work);
        for (auto& th : pool)
            th.join();
    }
    for (const auto& f : plan.planned_failures) {
        if (on_cell)
            on_cell(f);
        outcomes.push_back(f);
    }
    g.cells = std::move(outcomes);
    g.trends = summarize_trends(plan, g.cells);
    return g;
}

inline GridResult run_adaptability(const RunConfig& base, int workers = 1) {
    return run_grid(plan_adaptability(base), workers);
}
inline GridResult run_sensitivity_scenarios(const RunConfig& base, int workers = 1) {
    return run_grid(plan_sensitivity_scenarios(base), workers);
}
inline GridResult run_sensitivity_granularity(const RunConfig& base, int workers = 1) {
    return run_grid(plan_sensitivity_granularity(base), workers);
}
inline GridResult run_efficiency_buffer(const RunConfig& base, int workers = 1) {
    return run_grid(plan_efficiency_buffer(base), workers);
}
inline GridResult run_efficiency_epochs(const RunConfig& base, int workers = 1) {
    return run_grid(plan_efficiency_epochs(base), workers);
}

} // namespace clbench
