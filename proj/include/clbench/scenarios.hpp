#pragma once

// Task streams: class splits, permuted/rotated domain shifts, NC/NI streams.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "clbench/data.hpp"
#include "clbench/util.hpp"

namespace clbench {

enum class Scenario { ClassIL, TaskIL, DomainIL };
enum class Granularity { Category, Object };

inline std::string to_string(Scenario s) {
    switch (s) {
    case Scenario::ClassIL: return "class-il";
    case Scenario::TaskIL: return "task-il";
    case Scenario::DomainIL: return "domain-il";
    }
    return "?";
}

inline std::string to_string(Granularity g) { return g == Granularity::Category ? "category" : "object"; }

inline Scenario scenario_from_string(const std::string& s) {
    if (s == "class-il") return Scenario::ClassIL;
    if (s == "task-il") return Scenario::TaskIL;
    if (s == "domain-il") return Scenario::DomainIL;
    throw ConfigError("unknown scenario '" + s + "' (expected class-il, task-il or domain-il)");
}

inline Granularity granularity_from_string(const std::string& s) {
    if (s == "category") return Granularity::Category;
    if (s == "object") return Granularity::Object;
    throw ConfigError("unknown granularity '" + s + "' (expected category or object)");
}

struct Task {
    LabeledDataset train;
    LabeledDataset test;
    std::vector<int> class_set; // ascending
    int task_id = 0;
};

struct TaskStream {
    std::vector<Task> tasks;
    Scenario scenario = Scenario::ClassIL;
    Granularity granularity = Granularity::Object;
    int num_classes = 0;
    std::string name;
    /// Feature permutation per task (permuted streams only).
    std::vector<std::vector<int>> permutations;
    /// Rotation angle per task in degrees (rotated streams only).
    std::vector<double> angles;

    bool provides_task_labels_at_test() const { return scenario == Scenario::TaskIL; }
    int num_tasks() const { return static_cast<int>(tasks.size()); }
    int input_dim() const { return tasks.empty() ? 0 : static_cast<int>(tasks.front().train.features.cols()); }
};

namespace detail {

inline std::vector<int> sorted_classes(const LabeledDataset& ds) {
    std::set<int> s(ds.labels.begin(), ds.labels.end());
    return {s.begin(), s.end()};
}

inline std::vector<int> rows_with_labels(const LabeledDataset& ds, const std::vector<int>& classes) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
        if (std::binary_search(classes.begin(), classes.end(), ds.labels[i]))
            idx.push_back(static_cast<int>(i));
    return idx;
}

inline std::vector<int> all_rows(const LabeledDataset& ds) {
    std::vector<int> r(ds.labels.size());
    std::iota(r.begin(), r.end(), 0);
    return r;
}

inline TaskStream class_partition_stream(const DataSplit& data, const std::vector<std::vector<int>>& groups,
                                         Scenario scenario) {
    TaskStream stream;
    stream.scenario = scenario;
    stream.name = data.train.name;
    stream.num_classes = std::max(data.train.num_classes(), data.test.num_classes());
    for (std::size_t t = 0; t < groups.size(); ++t) {
        std::vector<int> cls = groups[t];
        std::sort(cls.begin(), cls.end());
        Task task;
        task.task_id = static_cast<int>(t);
        task.class_set = cls;
        task.train = data.train.select(rows_with_labels(data.train, cls));
        task.test = data.test.select(rows_with_labels(data.test, cls));
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

inline LabeledDataset relabel_to_categories(const LabeledDataset& ds) {
    if (ds.category_of.empty())
        throw ConfigError("dataset '" + ds.name + "' has no category mapping");
    LabeledDataset out = ds;
    for (int& y : out.labels) {
        if (y < 0 || y >= static_cast<int>(ds.category_of.size()))
            throw ConfigError("label " + std::to_string(y) + " has no category mapping");
        y = ds.category_of[static_cast<std::size_t>(y)];
    }
    out.category_of.clear();
    return out;
}

} // namespace detail

/// Shuffles the class list by seed and cuts it into `num_tasks` equal contiguous groups.
inline TaskStream split_by_classes(const DataSplit& data, int num_tasks, Scenario scenario,
                                   std::uint64_t class_order_seed) {
    if (scenario == Scenario::DomainIL)
        throw ConfigError("split_by_classes builds class-il or task-il streams only");
    if (num_tasks < 1)
        throw ConfigError("num_tasks must be positive");
    std::vector<int> classes = detail::sorted_classes(data.train);
    const int C = static_cast<int>(classes.size());
    if (C % num_tasks != 0)
        throw ConfigError(std::to_string(C) + " classes cannot be split evenly into " +
                          std::to_string(num_tasks) + " tasks");
    std::mt19937_64 rng(class_order_seed);
    std::shuffle(classes.begin(), classes.end(), rng);
    const int per = C / num_tasks;
    std::vector<std::vector<int>> groups;
    for (int t = 0; t < num_tasks; ++t)
        groups.emplace_back(classes.begin() + t * per, classes.begin() + (t + 1) * per);
    return detail::class_partition_stream(data, groups, scenario);
}

/// out[:, k] = in[:, perm[k]]
inline Matrix apply_permutation(const Matrix& features, const std::vector<int>& perm) {
    if (static_cast<Eigen::Index>(perm.size()) != features.cols())
        throw ConfigError("permutation length does not match feature width");
    Matrix out(features.rows(), features.cols());
    for (std::size_t k = 0; k < perm.size(); ++k)
        out.col(static_cast<Eigen::Index>(k)) = features.col(perm[k]);
    return out;
}

inline std::vector<int> invert_permutation(const std::vector<int>& perm) {
    std::vector<int> inv(perm.size());
    for (std::size_t k = 0; k < perm.size(); ++k)
        inv[static_cast<std::size_t>(perm[k])] = static_cast<int>(k);
    return inv;
}

/// Domain-IL stream whose tasks see the same data under different feature permutations.
/// Task 0 keeps the identity permutation.
inline TaskStream make_permuted_stream(const DataSplit& data, int num_tasks, std::uint64_t seed) {
    if (num_tasks < 1)
        throw ConfigError("num_tasks must be positive");
    TaskStream stream;
    stream.scenario = Scenario::DomainIL;
    stream.name = data.train.name + "-permuted";
    stream.num_classes = std::max(data.train.num_classes(), data.test.num_classes());
    const auto d = static_cast<int>(data.train.features.cols());
    const std::vector<int> classes = detail::sorted_classes(data.train);
    for (int t = 0; t < num_tasks; ++t) {
        std::vector<int> perm(static_cast<std::size_t>(d));
        std::iota(perm.begin(), perm.end(), 0);
        if (t > 0) {
            std::mt19937_64 rng(derive_seed(seed, "permutation-" + std::to_string(t)));
            std::shuffle(perm.begin(), perm.end(), rng);
        }
        Task task;
        task.task_id = t;
        task.class_set = classes;
        task.train = data.train;
        task.test = data.test;
        if (t > 0) {
            task.train.features = apply_permutation(data.train.features, perm);
            task.test.features = apply_permutation(data.test.features, perm);
        }
        if (task.train.rows.empty())
            task.train.rows = detail::all_rows(task.train);
        if (task.test.rows.empty())
            task.test.rows = detail::all_rows(task.test);
        stream.permutations.push_back(std::move(perm));
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

/// Rotates a row-major side x side image about its center. Output pixels sample the
/// source bilinearly; samples falling outside the source read as 0.
inline RowVector rotate_image(const RowVector& image, int side, double degrees) {
    if (static_cast<Eigen::Index>(side) * side != image.size())
        throw ConfigError("image of " + std::to_string(image.size()) + " pixels is not " +
                          std::to_string(side) + "x" + std::to_string(side));
    const double rad = degrees * std::numbers::pi / 180.0;
    double c = std::cos(rad);
    double s = std::sin(rad);
    auto snap = [](double v) {
        const double r = std::round(v);
        return std::abs(v - r) < 1e-9 ? r : v;
    };
    c = snap(c);
    s = snap(s);
    const double center = (side - 1) / 2.0;
    RowVector out = RowVector::Zero(image.size());
    auto pixel = [&](int r, int col) -> double {
        if (r < 0 || r >= side || col < 0 || col >= side)
            return 0.0;
        return image[static_cast<Eigen::Index>(r) * side + col];
    };
    for (int r = 0; r < side; ++r)
        for (int col = 0; col < side; ++col) {
            const double y = r - center;
            const double x = col - center;
            const double xs = snap(c * x + s * y + center);
            const double ys = snap(-s * x + c * y + center);
            const int x0 = static_cast<int>(std::floor(xs));
            const int y0 = static_cast<int>(std::floor(ys));
            const double fx = xs - x0;
            const double fy = ys - y0;
            double v = 0.0;
            if ((1 - fx) * (1 - fy) != 0) v += (1 - fx) * (1 - fy) * pixel(y0, x0);
            if (fx * (1 - fy) != 0) v += fx * (1 - fy) * pixel(y0, x0 + 1);
            if ((1 - fx) * fy != 0) v += (1 - fx) * fy * pixel(y0 + 1, x0);
            if (fx * fy != 0) v += fx * fy * pixel(y0 + 1, x0 + 1);
            out[static_cast<Eigen::Index>(r) * side + col] = v;
        }
    return out;
}

inline Matrix rotate_images(const Matrix& features, int side, double degrees) {
    Matrix out(features.rows(), features.cols());
    for (Eigen::Index i = 0; i < features.rows(); ++i)
        out.row(i) = rotate_image(features.row(i), side, degrees);
    return out;
}

/// Domain-IL stream of rotated copies; angles evenly spaced in [0, max_angle_degrees].
inline TaskStream make_rotated_stream(const DataSplit& data, int num_tasks, double max_angle_degrees,
                                      std::uint64_t /*seed*/ = 0) {
    if (num_tasks < 1)
        throw ConfigError("num_tasks must be positive");
    const auto d = data.train.features.cols();
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
    if (static_cast<Eigen::Index>(side) * side != d)
        throw ConfigError("feature width " + std::to_string(d) + " is not a square image");
    TaskStream stream;
    stream.scenario = Scenario::DomainIL;
    stream.name = data.train.name + "-rotated";
    stream.num_classes = std::max(data.train.num_classes(), data.test.num_classes());
    const std::vector<int> classes = detail::sorted_classes(data.train);
    for (int t = 0; t < num_tasks; ++t) {
        const double angle = num_tasks == 1 ? 0.0 : max_angle_degrees * t / (num_tasks - 1);
        Task task;
        task.task_id = t;
        task.class_set = classes;
        task.train = data.train;
        task.test = data.test;
        if (angle != 0.0) {
            task.train.features = rotate_images(data.train.features, side, angle);
            task.test.features = rotate_images(data.test.features, side, angle);
        }
        if (task.train.rows.empty())
            task.train.rows = detail::all_rows(task.train);
        if (task.test.rows.empty())
            task.test.rows = detail::all_rows(task.test);
        stream.angles.push_back(angle);
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

/// Class counts for a New-Classes stream: equal tasks, the first one absorbs the remainder
/// (50 classes over 9 tasks gives 10 then eight tasks of 5).
inline std::vector<int> nc_task_sizes(int num_classes, int num_tasks) {
    if (num_tasks < 1)
        throw ConfigError("num_tasks must be positive");
    const int per = num_classes / num_tasks;
    if (per < 1)
        throw ConfigError(std::to_string(num_classes) + " classes cannot fill " + std::to_string(num_tasks) +
                          " tasks");
    std::vector<int> sizes(static_cast<std::size_t>(num_tasks), per);
    sizes[0] = num_classes - per * (num_tasks - 1);
    return sizes;
}

/// New-Classes stream at the requested granularity (class-il, ascending class order).
inline TaskStream make_nc_stream(const DataSplit& data, Granularity granularity, int num_tasks,
                                 Scenario scenario = Scenario::ClassIL) {
    DataSplit src = data;
    if (granularity == Granularity::Category) {
        src.train = detail::relabel_to_categories(data.train);
        src.test = detail::relabel_to_categories(data.test);
    }
    const std::vector<int> classes = detail::sorted_classes(src.train);
    const std::vector<int> sizes = nc_task_sizes(static_cast<int>(classes.size()), num_tasks);
    std::vector<std::vector<int>> groups;
    std::size_t at = 0;
    for (int n : sizes) {
        groups.emplace_back(classes.begin() + static_cast<std::ptrdiff_t>(at),
                            classes.begin() + static_cast<std::ptrdiff_t>(at + static_cast<std::size_t>(n)));
        at += static_cast<std::size_t>(n);
    }
    TaskStream stream = detail::class_partition_stream(src, groups, scenario);
    stream.granularity = granularity;
    stream.name = data.train.name + "-nc-" + to_string(granularity);
    return stream;
}

/// New-Instances stream: every task holds every class, each task a disjoint seeded slice of
/// every class's train and test samples. `session_shift` > 0 adds a per-task Gaussian offset
/// (expected radius session_shift) to model a new acquisition session.
inline TaskStream make_ni_stream(const DataSplit& data, int num_tasks, std::uint64_t seed,
                                 Granularity granularity = Granularity::Object, double session_shift = 0.0) {
    if (num_tasks < 1)
        throw ConfigError("num_tasks must be positive");
    DataSplit src = data;
    if (granularity == Granularity::Category) {
        src.train = detail::relabel_to_categories(data.train);
        src.test = detail::relabel_to_categories(data.test);
    }
    const std::vector<int> classes = detail::sorted_classes(src.train);
    std::mt19937_64 rng(seed);

    auto slice = [&](const LabeledDataset& ds, const char* what) {
        std::vector<std::vector<int>> per_task(static_cast<std::size_t>(num_tasks));
        for (int c : classes) {
            std::vector<int> idx;
            for (std::size_t i = 0; i < ds.labels.size(); ++i)
                if (ds.labels[i] == c)
                    idx.push_back(static_cast<int>(i));
            if (static_cast<int>(idx.size()) < num_tasks)
                throw ConfigError(std::string("class ") + std::to_string(c) + " has " + std::to_string(idx.size()) +
                                  " " + what + " samples, fewer than " + std::to_string(num_tasks) + " tasks");
            std::shuffle(idx.begin(), idx.end(), rng);
            const std::size_t n = idx.size();
            for (int t = 0; t < num_tasks; ++t) {
                const std::size_t lo = n * static_cast<std::size_t>(t) / static_cast<std::size_t>(num_tasks);
                const std::size_t hi = n * static_cast<std::size_t>(t + 1) / static_cast<std::size_t>(num_tasks);
                per_task[static_cast<std::size_t>(t)].insert(per_task[static_cast<std::size_t>(t)].end(),
                                                             idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                                             idx.begin() + static_cast<std::ptrdiff_t>(hi));
            }
        }
        for (auto& v : per_task)
            std::sort(v.begin(), v.end());
        return per_task;
    };
    const auto train_idx = slice(src.train, "train");
    const auto test_idx = slice(src.test, "test");

    TaskStream stream;
    stream.scenario = Scenario::DomainIL;
    stream.granularity = granularity;
    stream.name = data.train.name + "-ni-" + to_string(granularity);
    stream.num_classes = std::max(src.train.num_classes(), src.test.num_classes());
    const auto d = src.train.features.cols();
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int t = 0; t < num_tasks; ++t) {
        Task task;
        task.task_id = t;
        task.class_set = classes;
        task.train = src.train.select(train_idx[static_cast<std::size_t>(t)]);
        task.test = src.test.select(test_idx[static_cast<std::size_t>(t)]);
        if (session_shift > 0) {
            std::mt19937_64 srng(derive_seed(seed, "session-" + std::to_string(t)));
            RowVector offset(d);
            for (Eigen::Index k = 0; k < d; ++k)
                offset[k] = session_shift / std::sqrt(static_cast<double>(d)) * gauss(srng);
            task.train.features.rowwise() += offset;
            task.test.features.rowwise() += offset;
        }
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

/// Audit manifest: one line per (task, split, source row, label).
inline void write_manifest_csv(const TaskStream& stream, std::ostream& out) {
    out << "task_id,split,row,label\n";
    for (const Task& t : stream.tasks) {
        for (std::size_t i = 0; i < t.train.labels.size(); ++i)
            out << t.task_id << ",train," << t.train.rows[i] << ',' << t.train.labels[i] << '\n';
        for (std::size_t i = 0; i < t.test.labels.size(); ++i)
            out << t.task_id << ",test," << t.test.rows[i] << ',' << t.test.labels[i] << '\n';
    }
}

/// Hash over the manifest and every feature bit; identifies a stream for provenance.
inline std::uint64_t stream_hash(const TaskStream& stream) {
    Fnv1a h;
    h.update(stream.name);
    h.update(to_string(stream.scenario));
    for (const Task& t : stream.tasks)
        for (const LabeledDataset* ds : {&t.train, &t.test}) {
            h.update_value(t.task_id);
            h.update(ds->rows.data(), ds->rows.size() * sizeof(int));
            h.update(ds->labels.data(), ds->labels.size() * sizeof(int));
            h.update(ds->features.data(), static_cast<std::size_t>(ds->features.size()) * sizeof(double));
        }
    return h.digest();
}

} // namespace clbench
