#pragma once

// Accuracy matrix bookkeeping, average accuracy and backward transfer.
//
// R(i, j) is test accuracy on task j after training through task i (0-based).
// ACC = mean_j R(T-1, j); BWT = mean_{j<T-1} (R(T-1, j) - R(j, j)).

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "clbench/error.hpp"
#include "clbench/util.hpp"

namespace clbench {

class AccuracyMatrix {
public:
    AccuracyMatrix() = default;
    explicit AccuracyMatrix(int num_tasks)
        : t_(num_tasks), cells_(static_cast<std::size_t>(num_tasks) * static_cast<std::size_t>(num_tasks)) {
        if (num_tasks < 1)
            throw ConfigError("accuracy matrix needs at least one task");
    }

    int num_tasks() const { return t_; }

    /// Upper-triangle entries (j > i) are allowed for forward-transfer audits.
    void record(int trained_through, int evaluated_task, double accuracy) {
        check_index(trained_through, evaluated_task);
        if (!(accuracy >= 0.0 && accuracy <= 1.0))
            throw ProtocolError("accuracy " + format_double(accuracy) + " outside [0,1]");
        auto& cell = at(trained_through, evaluated_task);
        if (cell)
            throw ProtocolError("R[" + std::to_string(trained_through) + "][" + std::to_string(evaluated_task) +
                                "] already recorded");
        cell = accuracy;
    }

    std::optional<double> get(int i, int j) const {
        check_index(i, j);
        return cells_[static_cast<std::size_t>(i) * static_cast<std::size_t>(t_) + static_cast<std::size_t>(j)];
    }

    double value(int i, int j) const {
        auto v = get(i, j);
        if (!v)
            throw StateError("R[" + std::to_string(i) + "][" + std::to_string(j) + "] is undefined");
        return *v;
    }

    /// Number of defined entries in row i.
    int defined_in_row(int i) const {
        int n = 0;
        for (int j = 0; j < t_; ++j)
            n += get(i, j).has_value();
        return n;
    }

    bool row_complete(int i) const {
        for (int j = 0; j <= i; ++j)
            if (!get(i, j))
                return false;
        return true;
    }

    bool operator==(const AccuracyMatrix&) const = default;

    /// CSV: header `trained_through,task_0,...`, one row per trained_through, blank = undefined.
    void write_csv(std::ostream& out) const {
        out << "trained_through";
        for (int j = 0; j < t_; ++j)
            out << ",task_" << j;
        out << '\n';
        for (int i = 0; i < t_; ++i) {
            out << i;
            for (int j = 0; j < t_; ++j) {
                out << ',';
                if (auto v = get(i, j))
                    out << format_double(*v);
            }
            out << '\n';
        }
    }

    static AccuracyMatrix read_csv(std::istream& in) {
        std::string header;
        if (!std::getline(in, header))
            throw FormatError("matrix csv: empty input");
        int t = 0;
        for (char c : header)
            t += c == ',';
        if (t < 1)
            throw FormatError("matrix csv: header has no task columns");
        AccuracyMatrix m(t);
        std::string line;
        for (int i = 0; i < t; ++i) {
            if (!std::getline(in, line))
                throw FormatError("matrix csv: expected " + std::to_string(t) + " rows, got " + std::to_string(i));
            std::vector<std::string> fields;
            std::stringstream ss(line);
            std::string f;
            while (std::getline(ss, f, ','))
                fields.push_back(f);
            if (!line.empty() && line.back() == ',')
                fields.emplace_back();
            if (static_cast<int>(fields.size()) != t + 1)
                throw FormatError("matrix csv: row " + std::to_string(i) + " has " + std::to_string(fields.size()) +
                                  " fields, expected " + std::to_string(t + 1));
            for (int j = 0; j < t; ++j) {
                const std::string& cell = fields[static_cast<std::size_t>(j) + 1];
                if (cell.empty())
                    continue;
                try {
                    std::size_t used = 0;
                    const double v = std::stod(cell, &used);
                    if (used != cell.size())
                        throw std::invalid_argument(cell);
                    m.record(i, j, v);
                } catch (const std::logic_error&) {
                    throw FormatError("matrix csv: bad number '" + cell + "' at row " + std::to_string(i));
                }
            }
        }
        return m;
    }

private:
    void check_index(int i, int j) const {
        if (i < 0 || i >= t_ || j < 0 || j >= t_)
            throw ProtocolError("matrix index (" + std::to_string(i) + "," + std::to_string(j) +
                                ") outside a " + std::to_string(t_) + "-task matrix");
    }
    std::optional<double>& at(int i, int j) {
        return cells_[static_cast<std::size_t>(i) * static_cast<std::size_t>(t_) + static_cast<std::size_t>(j)];
    }

    int t_ = 0;
    std::vector<std::optional<double>> cells_;
};

inline double average_accuracy(const AccuracyMatrix& m) {
    const int last = m.num_tasks() - 1;
    if (!m.row_complete(last))
        throw StateError("final row of the accuracy matrix is incomplete");
    double sum = 0;
    for (int j = 0; j <= last; ++j)
        sum += m.value(last, j);
    return sum / m.num_tasks();
}

inline double backward_transfer(const AccuracyMatrix& m) {
    const int T = m.num_tasks();
    if (T < 2)
        throw StateError("backward transfer is undefined for a single task");
    if (!m.row_complete(T - 1))
        throw StateError("final row of the accuracy matrix is incomplete");
    double sum = 0;
    for (int j = 0; j < T - 1; ++j)
        sum += m.value(T - 1, j) - m.value(j, j);
    return sum / (T - 1);
}

/// Elementwise mean of equally-shaped matrices; an entry is defined where all inputs define it.
inline AccuracyMatrix mean_matrix(const std::vector<AccuracyMatrix>& ms) {
    if (ms.empty())
        throw StateError("no matrices to average");
    const int T = ms.front().num_tasks();
    AccuracyMatrix out(T);
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) {
            double sum = 0;
            bool all = true;
            for (const auto& m : ms) {
                if (m.num_tasks() != T)
                    throw StateError("cannot average matrices of different sizes");
                auto v = m.get(i, j);
                if (!v) {
                    all = false;
                    break;
                }
                sum += *v;
            }
            if (all)
                out.record(i, j, std::clamp(sum / static_cast<double>(ms.size()), 0.0, 1.0));
        }
    return out;
}

struct TaskTiming {
    double wall_seconds = 0.0;
    long long gradient_steps = 0;
};

struct MetricReport {
    double acc = 0.0;
    std::optional<double> bwt;
    std::vector<double> per_task_final;
    std::vector<TaskTiming> timing;
};

inline MetricReport make_report(const AccuracyMatrix& m, std::vector<TaskTiming> timing = {}) {
    MetricReport r;
    r.acc = average_accuracy(m);
    if (m.num_tasks() >= 2)
        r.bwt = backward_transfer(m);
    for (int j = 0; j < m.num_tasks(); ++j)
        r.per_task_final.push_back(m.value(m.num_tasks() - 1, j));
    r.timing = std::move(timing);
    return r;
}

} // namespace clbench
