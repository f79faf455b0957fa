#pragma once

// clbench command line: run / grid / report / plot / list.
// Exit codes: 0 success, 2 partial (failed cells or corrupt cells in a report),
// 1 configuration or usage error.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "clbench/report.hpp"

namespace clbench {

inline constexpr int exit_ok = 0;
inline constexpr int exit_error = 1;
inline constexpr int exit_partial = 2;

namespace detail {

/// Removes what a previous run wrote; leaves unrelated files alone.
inline void clear_run_dir(const fs::path& run) {
    if (!fs::exists(run))
        return;
    for (const auto& e : fs::directory_iterator(run)) {
        const std::string name = e.path().filename().string();
        const bool ours = name.rfind("cell-", 0) == 0 || name == "manifest.json" || name == "failures.json" ||
                          name == "summary.json" || name.rfind("report.", 0) == 0 || name.rfind("plot-", 0) == 0;
        if (ours)
            fs::remove_all(e.path());
    }
}

inline int execute_plan(const GridPlan& plan, const fs::path& out_dir, bool force, int workers, std::ostream& out,
                        std::ostream& err) {
    const fs::path manifest = out_dir / "manifest.json";
    if (fs::exists(manifest) && !force) {
        json m;
        try {
            m = json::parse(read_text(manifest));
        } catch (const json::exception&) {
            err << "error: " << manifest.string() << " is unreadable; use --force to overwrite\n";
            return exit_error;
        }
        if (m.value("complete", false)) {
            err << "error: " << out_dir.string() << " holds a completed run; use --force to overwrite\n";
            return exit_error;
        }
        if (m.value("config_hash", "") != config_hash(plan.base)) {
            err << "error: " << out_dir.string()
                << " holds an unfinished run of a different configuration; use --force to overwrite\n";
            return exit_error;
        }
        out << "resuming unfinished run in " << out_dir.string() << "\n";
    }
    if (force)
        clear_run_dir(out_dir);
    const RunDirOutcome r = execute_into(plan, out_dir, workers);
    const std::size_t failed = r.grid.failure_count();
    const auto audit = r.grid.audit_log();
    for (const auto& line : audit)
        err << "audit: " << line << "\n";
    out << plan.cells.size() + plan.planned_failures.size() << " cells, " << failed << " failed, " << r.reused
        << " reused, " << plan.omitted.size() << " omitted -> " << out_dir.string() << "\n";
    for (const auto& c : r.grid.cells)
        if (c.failure)
            err << "cell " << c.cell.id << " failed: " << *c.failure << "\n";
    return failed == 0 && audit.empty() ? exit_ok : exit_partial;
}

inline std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v)
        s += (s.empty() ? "" : ", ") + x;
    return s;
}

} // namespace detail

/// Runs the command line; `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"continual-learning benchmark harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir, format = "csv", axis;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool force = false;

    auto add_run_flags = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file (dotted key = value)")->required();
        sub->add_option("--out", out_dir, "run directory")->required();
        sub->add_option("--seed", seed, "override the base seed");
        sub->add_option("--workers", workers, "concurrent grid cells");
        sub->add_flag("--force", force, "overwrite a completed run directory");
    };
    CLI::App* run = app.add_subcommand("run", "train one strategy on one stream");
    add_run_flags(run);
    CLI::App* grid = app.add_subcommand("grid", "run the protocol grid named by protocol.kind");
    add_run_flags(grid);
    CLI::App* report = app.add_subcommand("report", "summarize a run directory as csv or json");
    report->add_option("--out", out_dir, "run directory")->required();
    report->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    CLI::App* plot = app.add_subcommand("plot", "write SVG charts and tsv for one axis");
    plot->add_option("--out", out_dir, "run directory")->required();
    plot->add_option("--axis", axis, "grid axis, e.g. num_tasks")->required();
    CLI::App* list = app.add_subcommand("list", "list strategies, streams, protocols and config keys");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return exit_ok;
        }
        err << "error: " << e.what() << "\n";
        return exit_error;
    }

    try {
        if (list->parsed()) {
            std::vector<std::string> strategies;
            for (StrategyKind k : all_strategy_kinds())
                strategies.push_back(to_string(k));
            out << "strategies: " << detail::join(strategies) << "\n";
            out << "datasets: " << detail::join(dataset_names()) << "\n";
            out << "constructions: split, permuted, rotated, nc, ni\n";
            out << "protocols: single, adaptability, scenarios, granularity, buffer, epochs\n";
            out << "config keys:\n";
            for (const auto& k : config_keys())
                out << "  " << k << "\n";
            return exit_ok;
        }
        if (report->parsed()) {
            auto [path, corrupt] = emit_report(out_dir, report_format_from_string(format));
            for (const auto& c : corrupt)
                err << "corrupt: " << c << "\n";
            out << path.string() << "\n";
            return corrupt.empty() ? exit_ok : exit_partial;
        }
        if (plot->parsed()) {
            const PlotFiles files = emit_plot_data(out_dir, axis);
            for (const auto& c : files.charts)
                out << c.string() << "\n";
            out << files.tsv.string() << "\n";
            return exit_ok;
        }

        RunConfig cfg = parse_config(config_path);
        if (seed)
            cfg.seed = *seed;
        if (workers)
            cfg.workers = *workers;
        validate(cfg);
        GridPlan plan;
        if (run->parsed()) {
            cfg.protocol = ProtocolKind::Single;
            plan = plan_single(cfg);
            // fail fast on incompatible pairings rather than recording a failed cell
            check_compatible(cfg.strategy.kind, resolve_scenario(cfg.stream));
        } else {
            if (cfg.protocol == ProtocolKind::Single)
                throw ConfigError("grid needs protocol.kind (adaptability, scenarios, granularity, buffer or epochs)");
            plan = plan_grid(cfg);
        }
        return detail::execute_plan(plan, out_dir, force, cfg.workers, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_error;
    }
}

} // namespace clbench
