#pragma once

// Run directories: writing cell results, reading them back, and the csv/json report
// and SVG/tsv plot data built from them.
//
//   <run>/manifest.json            grid axes, seeds, versions, cell list, complete flag
//   <run>/cell-<id>/matrix.csv     mean accuracy matrix
//   <run>/cell-<id>/matrix-r<k>.csv
//   <run>/cell-<id>/result.json
//   <run>/failures.json
//   <run>/summary.json             trend summaries

#include <filesystem>
#include <fstream>
#include <atomic>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "clbench/checkpoint.hpp"
#include "clbench/protocols.hpp"

namespace clbench {

inline constexpr int results_schema_version = 1;
inline constexpr const char* clbench_version = "1.0.0";

namespace fs = std::filesystem;
using nlohmann::json;

namespace detail {

inline void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw InputError("cannot write " + p.string());
    out << text;
    if (!out)
        throw InputError("write failed for " + p.string());
}

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw InputError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::string matrix_text(const AccuracyMatrix& m) {
    std::ostringstream ss;
    m.write_csv(ss);
    return ss.str();
}

} // namespace detail

inline json stream_config_to_json(const StreamConfig& s) {
    return {{"name", s.name},
            {"num_tasks", s.num_tasks},
            {"scenario", s.scenario},
            {"granularity", to_string(s.granularity)},
            {"seed", s.seed},
            {"max_angle", s.max_angle},
            {"session_shift", s.session_shift},
            {"train_per_class", s.train_per_class},
            {"test_per_class", s.test_per_class}};
}

inline json run_result_to_json(const CellOutcome& c) {
    const RunResult& r = *c.result;
    json j;
    j["schema_version"] = results_schema_version;
    j["cell"] = c.cell.id;
    j["axes"] = c.cell.axes;
    j["config_hash"] = config_hash(r.config);
    j["config"] = {{"stream", stream_config_to_json(r.config.stream)},
                   {"strategy", strategy_config_to_json(r.config.strategy)},
                   {"seed", r.config.seed},
                   {"replicates", r.config.replicates}};
    j["stream"] = {{"name", r.stream_name},
                   {"scenario", to_string(r.scenario)},
                   {"num_tasks", r.num_tasks},
                   {"num_classes", r.num_classes},
                   {"hash", r.stream_hash}};
    j["online"] = r.online();
    if (uses_replay(r.config.strategy.kind))
        j["effective_buffer"] = r.effective_buffer;
    j["notes"] = r.notes;
    j["acc"] = r.mean_report.acc;
    j["bwt"] = detail::opt_json(r.mean_report.bwt);
    json reps = json::array();
    for (std::size_t k = 0; k < r.replicates.size(); ++k) {
        const auto& rep = r.replicates[k];
        json o;
        o["replicate"] = k;
        o["seed"] = rep.seed;
        o["acc"] = rep.report.acc;
        o["bwt"] = detail::opt_json(rep.report.bwt);
        o["per_task_final"] = rep.report.per_task_final;
        std::vector<long long> steps;
        std::vector<double> wall;
        for (const auto& t : rep.report.timing) {
            steps.push_back(t.gradient_steps);
            wall.push_back(t.wall_seconds);
        }
        o["steps_per_task"] = steps;
        if (r.config.record_wallclock)
            o["wall_seconds_per_task"] = wall;
        o["memory_size"] = rep.memory_size;
        if (rep.task_il_matrix) {
            const MetricReport t = make_report(*rep.task_il_matrix);
            o["task_il"] = {{"acc", t.acc}, {"bwt", detail::opt_json(t.bwt)}};
        }
        reps.push_back(o);
    }
    j["replicates"] = reps;
    return j;
}

// ---------------------------------------------------------------------------
// Writing

inline fs::path cell_dir(const fs::path& run, const std::string& id) { return run / ("cell-" + id); }

inline void write_cell(const fs::path& run, const CellOutcome& c) {
    if (!c.result)
        return;
    const fs::path dir = cell_dir(run, c.cell.id);
    fs::create_directories(dir);
    for (std::size_t k = 0; k < c.result->replicates.size(); ++k)
        detail::write_text(dir / ("matrix-r" + std::to_string(k) + ".csv"),
                           detail::matrix_text(c.result->replicates[k].matrix));
    detail::write_text(dir / "matrix.csv", detail::matrix_text(c.result->mean));
    // result.json last: its presence marks the cell finished
    detail::write_text(dir / "result.json", detail::dump(run_result_to_json(c)));
}

inline json manifest_json(const GridPlan& plan, bool complete) {
    json j;
    j["schema_version"] = results_schema_version;
    j["clbench_version"] = clbench_version;
    j["protocol"] = to_string(plan.kind);
    j["axis"] = plan.axis;
    j["axis_values"] = plan.axis_values;
    j["strategies"] = plan.strategies;
    j["benchmarks"] = plan.benchmarks;
    j["config_hash"] = config_hash(plan.base);
    j["config"] = serialize_config(plan.base);
    j["seed"] = plan.base.seed;
    std::vector<std::uint64_t> seeds;
    for (int r = 0; r < plan.base.replicates; ++r)
        seeds.push_back(replicate_seed(plan.base.seed, r));
    j["replicate_seeds"] = seeds;
    json cells = json::array();
    for (const auto& c : plan.cells)
        cells.push_back({{"id", c.id}, {"axes", c.axes}, {"config_hash", config_hash(c.config)}});
    for (const auto& c : plan.planned_failures)
        cells.push_back({{"id", c.cell.id}, {"axes", c.cell.axes}, {"config_hash", config_hash(c.cell.config)}});
    j["cells"] = cells;
    json omitted = json::array();
    for (const auto& o : plan.omitted)
        omitted.push_back({{"id", o.id}, {"reason", o.reason}});
    j["omitted"] = omitted;
    j["complete"] = complete;
    return j;
}

inline json failures_json(const std::vector<CellOutcome>& cells) {
    json f = json::array();
    for (const auto& c : cells)
        if (c.failure)
            f.push_back({{"cell", c.cell.id}, {"axes", c.cell.axes}, {"reason", *c.failure}});
    return {{"schema_version", results_schema_version}, {"failures", f}};
}

inline json trends_json(const TrendSummary& t) {
    json series = json::array();
    for (const auto& s : t.series) {
        json pts = json::array();
        for (const auto& p : s.points)
            pts.push_back({{"axis_value", p.axis_value}, {"acc", p.acc}, {"bwt", detail::opt_json(p.bwt)}});
        series.push_back({{"key", s.key},
                          {"strategy", s.strategy},
                          {"points", pts},
                          {"acc_verdict", s.acc_verdict},
                          {"acc_deltas", s.acc_deltas}});
    }
    return {{"schema_version", results_schema_version}, {"axis", t.axis}, {"series", series}};
}

/// Result of executing a plan into a run directory.
struct RunDirOutcome {
    GridResult grid;
    std::size_t reused = 0;
};

/// Reads a finished cell back (used when resuming an interrupted run).
inline std::optional<CellOutcome> load_finished_cell(const fs::path& run, const Cell& cell) {
    const fs::path dir = cell_dir(run, cell.id);
    if (!fs::exists(dir / "result.json") || !fs::exists(dir / "matrix.csv"))
        return std::nullopt;
    try {
        const json j = json::parse(detail::read_text(dir / "result.json"));
        if (j.at("config_hash").get<std::string>() != config_hash(cell.config))
            return std::nullopt;
        std::istringstream in(detail::read_text(dir / "matrix.csv"));
        CellOutcome o;
        o.cell = cell;
        RunResult r;
        r.config = cell.config;
        r.mean = AccuracyMatrix::read_csv(in);
        r.mean_report = make_report(r.mean);
        o.result = std::move(r);
        return o;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

/// Executes `plan` into `run`. Finished cells already on disk (same config hash) are
/// reused; everything else is recomputed.
inline RunDirOutcome execute_into(const GridPlan& plan, const fs::path& run, int workers) {
    fs::create_directories(run);
    detail::write_text(run / "manifest.json", detail::dump(manifest_json(plan, false)));
    RunDirOutcome out;
    std::atomic<std::size_t> reused{0};
    out.grid = run_grid(
        plan, workers, [&](const CellOutcome& c) { write_cell(run, c); },
        [&](const Cell& c) {
            auto prior = load_finished_cell(run, c);
            if (prior)
                ++reused;
            return prior;
        });
    out.reused = reused;
    detail::write_text(run / "failures.json", detail::dump(failures_json(out.grid.cells)));
    detail::write_text(run / "summary.json", detail::dump(trends_json(out.grid.trends)));
    detail::write_text(run / "manifest.json", detail::dump(manifest_json(plan, true)));
    return out;
}

// ---------------------------------------------------------------------------
// Reading and reporting

struct ReportRow {
    std::string cell;
    std::map<std::string, std::string> axes;
    std::string strategy;
    int replicate = 0;
    std::uint64_t seed = 0;
    double acc = 0;
    std::optional<double> bwt;
    std::optional<double> task_il_acc;
    long long steps = 0;
    std::optional<double> wall_seconds;
    std::size_t memory_size = 0;
    std::string config_hash;
};

struct LoadedRun {
    json manifest;
    std::vector<json> cells; // parsed result.json, manifest order
    std::vector<ReportRow> rows;
    std::vector<std::string> corrupt; // "cell-<id>: reason"
    std::vector<std::string> axis_names;
};

inline const std::vector<std::string>& report_axis_columns() {
    static const std::vector<std::string> cols = {"benchmark", "scenario",    "granularity",
                                                  "num_tasks", "buffer_size", "epochs"};
    return cols;
}

inline LoadedRun load_run(const fs::path& run) {
    LoadedRun lr;
    if (!fs::is_directory(run))
        throw InputError("no cells found: " + run.string() + " is not a directory");
    std::vector<std::string> ids;
    if (fs::exists(run / "manifest.json")) {
        try {
            lr.manifest = json::parse(detail::read_text(run / "manifest.json"));
            for (const auto& c : lr.manifest.at("cells"))
                ids.push_back(c.at("id").get<std::string>());
        } catch (const json::exception& e) {
            lr.corrupt.push_back(std::string("manifest.json: ") + e.what());
            ids.clear();
        }
    }
    if (ids.empty()) {
        for (const auto& e : fs::directory_iterator(run)) {
            const std::string name = e.path().filename().string();
            if (e.is_directory() && name.rfind("cell-", 0) == 0)
                ids.push_back(name.substr(5));
        }
        std::sort(ids.begin(), ids.end());
    }
    std::set<std::string> axis_set;
    std::size_t present = 0;
    for (const auto& id : ids) {
        const fs::path dir = cell_dir(run, id);
        if (!fs::exists(dir))
            continue; // failed or not run; failures.json carries the reason
        ++present;
        try {
            json j = json::parse(detail::read_text(dir / "result.json"));
            if (j.at("schema_version").get<int>() != results_schema_version)
                throw FormatError("unsupported schema_version");
            std::vector<ReportRow> rows;
            const auto axes = j.at("axes").get<std::map<std::string, std::string>>();
            for (const auto& rep : j.at("replicates")) {
                ReportRow r;
                r.cell = id;
                r.axes = axes;
                r.strategy = axes.count("strategy") ? axes.at("strategy") : "";
                r.replicate = rep.at("replicate").get<int>();
                r.seed = rep.at("seed").get<std::uint64_t>();
                r.acc = rep.at("acc").get<double>();
                if (!rep.at("bwt").is_null())
                    r.bwt = rep.at("bwt").get<double>();
                if (rep.contains("task_il"))
                    r.task_il_acc = rep.at("task_il").at("acc").get<double>();
                for (long long s : rep.at("steps_per_task").get<std::vector<long long>>())
                    r.steps += s;
                if (rep.contains("wall_seconds_per_task")) {
                    double w = 0;
                    for (double s : rep.at("wall_seconds_per_task").get<std::vector<double>>())
                        w += s;
                    r.wall_seconds = w;
                }
                r.memory_size = rep.at("memory_size").get<std::size_t>();
                r.config_hash = j.at("config_hash").get<std::string>();
                rows.push_back(std::move(r));
            }
            for (const auto& [k, v] : axes)
                axis_set.insert(k);
            lr.rows.insert(lr.rows.end(), rows.begin(), rows.end());
            lr.cells.push_back(std::move(j));
        } catch (const std::exception& e) {
            lr.corrupt.push_back("cell-" + id + ": " + e.what());
        }
    }
    if (present == 0)
        throw InputError("no cells found in " + run.string());
    lr.axis_names.assign(axis_set.begin(), axis_set.end());
    return lr;
}

namespace detail {

inline std::string csv_num(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

} // namespace detail

inline std::string report_csv(const LoadedRun& lr) {
    std::ostringstream out;
    out << "cell,strategy";
    for (const auto& c : report_axis_columns())
        out << ',' << c;
    out << ",replicate,seed,acc,bwt,task_il_acc,gradient_steps,wall_seconds,memory_size,config_hash\n";
    for (const auto& r : lr.rows) {
        out << r.cell << ',' << r.strategy;
        for (const auto& c : report_axis_columns()) {
            out << ',';
            if (auto it = r.axes.find(c); it != r.axes.end())
                out << it->second;
        }
        out << ',' << r.replicate << ',' << r.seed << ',' << format_double(r.acc) << ','
            << detail::csv_num(r.bwt) << ',' << detail::csv_num(r.task_il_acc) << ',' << r.steps << ','
            << detail::csv_num(r.wall_seconds) << ',' << r.memory_size << ',' << r.config_hash << '\n';
    }
    return out.str();
}

inline json report_json(const LoadedRun& lr) {
    json j;
    j["schema_version"] = results_schema_version;
    if (!lr.manifest.is_null()) {
        j["protocol"] = lr.manifest.value("protocol", "");
        j["axis"] = lr.manifest.value("axis", "");
        j["config_hash"] = lr.manifest.value("config_hash", "");
    }
    json cells = json::array();
    for (const auto& c : lr.cells) {
        json o = {{"cell", c.at("cell")},   {"axes", c.at("axes")}, {"config_hash", c.at("config_hash")},
                  {"acc", c.at("acc")},     {"bwt", c.at("bwt")},   {"online", c.at("online")},
                  {"notes", c.at("notes")}, {"replicates", json::array()}};
        for (const auto& rep : c.at("replicates")) {
            json r = {{"replicate", rep.at("replicate")}, {"seed", rep.at("seed")},
                      {"acc", rep.at("acc")},             {"bwt", rep.at("bwt")},
                      {"steps_per_task", rep.at("steps_per_task")}};
            if (rep.contains("wall_seconds_per_task"))
                r["wall_seconds_per_task"] = rep.at("wall_seconds_per_task");
            if (rep.contains("task_il"))
                r["task_il"] = rep.at("task_il");
            o["replicates"].push_back(r);
        }
        cells.push_back(o);
    }
    j["cells"] = cells;
    j["corrupt"] = lr.corrupt;
    return j;
}

enum class ReportFormat { Csv, Json };

inline ReportFormat report_format_from_string(const std::string& s) {
    if (s == "csv")
        return ReportFormat::Csv;
    if (s == "json")
        return ReportFormat::Json;
    throw ConfigError("unknown format '" + s + "' (expected csv or json)");
}

/// Writes report.csv or report.json into the run directory; returns the path and the
/// list of corrupt cells (which are skipped).
inline std::pair<fs::path, std::vector<std::string>> emit_report(const fs::path& run, ReportFormat fmt) {
    const LoadedRun lr = load_run(run);
    fs::path out;
    if (fmt == ReportFormat::Csv) {
        out = run / "report.csv";
        detail::write_text(out, report_csv(lr));
    } else {
        out = run / "report.json";
        detail::write_text(out, detail::dump(report_json(lr)));
    }
    return {out, lr.corrupt};
}

// ---------------------------------------------------------------------------
// Plot data

struct PlotSeries {
    std::string label; // strategy plus fixed descriptors other than the axis
    struct Point {
        std::string axis_value;
        double x = 0;
        double mean = 0, lo = 0, hi = 0;
    };
    std::vector<Point> points;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
        case '&': o += "&amp;"; break;
        case '<': o += "&lt;"; break;
        case '>': o += "&gt;"; break;
        case '"': o += "&quot;"; break;
        default: o += c;
        }
    }
    return o;
}

inline std::string svg_num(double v) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << v;
    return ss.str();
}

inline std::string render_svg(const std::string& title, const std::string& axis, const std::vector<PlotSeries>& series,
                              bool numeric_axis, const std::vector<std::string>& categories) {
    const double W = 640, H = 400, L = 60, R = 170, Tm = 40, B = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (const auto& p : s.points) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.lo);
            ymax = std::max(ymax, p.hi);
        }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    if (xmax == xmin) {
        xmin -= 1;
        xmax += 1;
    }
    if (ymax - ymin < 1e-9) {
        ymin -= 0.05;
        ymax += 0.05;
    }
    auto sx = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto sy = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - Tm - B); };
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">" << xml_escape(title) << "</text>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << xml_escape(axis)
      << "</text>\n";
    for (int k = 0; k <= 4; ++k) {
        const double y = ymin + (ymax - ymin) * k / 4;
        o << "<text x=\"" << L - 5 << "\" y=\"" << svg_num(sy(y) + 4) << "\" text-anchor=\"end\" font-size=\"10\">"
          << svg_num(y) << "</text>\n";
    }
    std::set<double> ticks;
    for (const auto& s : series)
        for (const auto& p : s.points)
            ticks.insert(p.x);
    for (double x : ticks) {
        std::string label = numeric_axis ? format_double(x) : categories.at(static_cast<std::size_t>(x));
        o << "<text x=\"" << svg_num(sx(x)) << "\" y=\"" << H - B + 15
          << "\" text-anchor=\"middle\" font-size=\"10\">" << xml_escape(label) << "</text>\n";
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* col = colors[i % 10];
        const auto& s = series[i];
        o << "<polyline fill=\"none\" stroke=\"" << col << "\" points=\"";
        for (std::size_t k = 0; k < s.points.size(); ++k)
            o << (k ? " " : "") << svg_num(sx(s.points[k].x)) << ',' << svg_num(sy(s.points[k].mean));
        o << "\"/>\n";
        for (const auto& p : s.points) {
            o << "<line x1=\"" << svg_num(sx(p.x)) << "\" y1=\"" << svg_num(sy(p.lo)) << "\" x2=\""
              << svg_num(sx(p.x)) << "\" y2=\"" << svg_num(sy(p.hi)) << "\" stroke=\"" << col << "\"/>\n";
            o << "<circle cx=\"" << svg_num(sx(p.x)) << "\" cy=\"" << svg_num(sy(p.mean)) << "\" r=\"3\" fill=\"" << col
              << "\"/>\n";
        }
        o << "<text x=\"" << W - R + 10 << "\" y=\"" << Tm + 14 * static_cast<double>(i) << "\" font-size=\"10\" fill=\""
          << col << "\">" << xml_escape(s.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

} // namespace detail

struct PlotFiles {
    std::vector<fs::path> charts;
    fs::path tsv;
};

/// One SVG per metric (acc, bwt) with x = axis value and one polyline per series,
/// error bars spanning min..max over replicates; plot-<axis>.tsv holds the per-replicate
/// values in report.csv row order.
inline PlotFiles emit_plot_data(const fs::path& run, const std::string& axis) {
    const LoadedRun lr = load_run(run);
    if (std::find(lr.axis_names.begin(), lr.axis_names.end(), axis) == lr.axis_names.end()) {
        std::string avail;
        for (const auto& a : lr.axis_names)
            avail += (avail.empty() ? "" : ", ") + a;
        throw ConfigError("unknown axis '" + axis + "'; available axes: " + avail);
    }
    const bool numeric = axis == "num_tasks" || axis == "buffer_size" || axis == "epochs";
    std::vector<std::string> categories;
    if (!numeric) {
        for (const auto& r : lr.rows) {
            const std::string& v = r.axes.at(axis);
            if (std::find(categories.begin(), categories.end(), v) == categories.end())
                categories.push_back(v);
        }
    }
    auto x_of = [&](const std::string& v) {
        if (numeric)
            return std::stod(v);
        return static_cast<double>(std::find(categories.begin(), categories.end(), v) - categories.begin());
    };
    auto label_of = [&](const ReportRow& r) {
        std::string label = r.strategy;
        for (const auto& [k, v] : r.axes)
            if (k != axis && k != "strategy")
                label += " " + v;
        return label;
    };

    PlotFiles files;
    files.tsv = run / ("plot-" + axis + ".tsv");
    {
        std::ostringstream t;
        t << "series\tcell\t" << axis << "\treplicate\tseed\tacc\tbwt\n";
        for (const auto& r : lr.rows)
            t << label_of(r) << '\t' << r.cell << '\t' << r.axes.at(axis) << '\t' << r.replicate << '\t' << r.seed
              << '\t' << format_double(r.acc) << '\t' << detail::csv_num(r.bwt) << '\n';
        detail::write_text(files.tsv, t.str());
    }

    for (const std::string metric : {"acc", "bwt"}) {
        std::map<std::string, std::map<double, std::vector<double>>> grouped;
        std::map<double, std::string> raw_value;
        for (const auto& r : lr.rows) {
            std::optional<double> v = metric == "acc" ? std::optional<double>(r.acc) : r.bwt;
            if (!v)
                continue;
            const double x = x_of(r.axes.at(axis));
            grouped[label_of(r)][x].push_back(*v);
            raw_value[x] = r.axes.at(axis);
        }
        std::vector<PlotSeries> series;
        for (const auto& [label, pts] : grouped) {
            PlotSeries s;
            s.label = label;
            for (const auto& [x, vals] : pts) {
                double sum = 0;
                for (double v : vals)
                    sum += v;
                s.points.push_back({raw_value[x], x, sum / static_cast<double>(vals.size()),
                                    *std::min_element(vals.begin(), vals.end()),
                                    *std::max_element(vals.begin(), vals.end())});
            }
            series.push_back(std::move(s));
        }
        const fs::path svg = run / ("plot-" + axis + "-" + metric + ".svg");
        detail::write_text(svg, detail::render_svg(metric + " vs " + axis, axis, series, numeric, categories));
        files.charts.push_back(svg);
    }
    return files;
}

} // namespace clbench
