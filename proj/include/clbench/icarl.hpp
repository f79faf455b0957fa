#pragma once

// iCaRL exemplar management: herding selection and nearest-mean-of-exemplars.

#include <limits>
#include <vector>

#include "clbench/error.hpp"
#include "clbench/nn.hpp"

namespace clbench {

inline Matrix l2_normalize_rows(const Matrix& m) {
    Matrix out = m;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double n = out.row(i).norm();
        if (n > 0)
            out.row(i) /= n;
    }
    return out;
}

/// Greedy herding over (already normalized) features: repeatedly add the candidate that
/// brings the running exemplar mean closest to the class mean. Returns row indices in
/// selection order; at most min(m, rows) of them. Ties go to the lower row index.
inline std::vector<int> herding_select(const Matrix& features, int m) {
    const Eigen::Index n = features.rows();
    if (n == 0)
        return {};
    if (m < 1)
        throw ConfigError("herding: m must be at least 1");
    const RowVector mu = features.colwise().mean();
    const auto k = std::min<Eigen::Index>(m, n);
    std::vector<int> chosen;
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    RowVector sum = RowVector::Zero(features.cols());
    for (Eigen::Index step = 0; step < k; ++step) {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (used[static_cast<std::size_t>(i)])
                continue;
            const double d = (mu - (sum + features.row(i)) / static_cast<double>(step + 1)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(i);
            }
        }
        used[static_cast<std::size_t>(best)] = true;
        sum += features.row(best);
        chosen.push_back(best);
    }
    return chosen;
}

struct ClassMean {
    int label = 0;
    RowVector mean;
};

/// Nearest class mean in Euclidean distance; ties go to the lowest class id.
inline int nearest_mean(const RowVector& feature, const std::vector<ClassMean>& means) {
    if (means.empty())
        throw StateError("nearest-mean classification without any exemplar means");
    int best = -1;
    double best_d = 0;
    for (const auto& cm : means) {
        const double d = (feature - cm.mean).squaredNorm();
        if (best < 0 || d < best_d || (d == best_d && cm.label < best)) {
            best = cm.label;
            best_d = d;
        }
    }
    return best;
}

} // namespace clbench
