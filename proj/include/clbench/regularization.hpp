#pragma once

// Parameter-importance regularizers: EWC (diagonal Fisher) and SI (path integral).

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "clbench/error.hpp"
#include "clbench/nn.hpp"

namespace clbench {

struct EwcAnchor {
    Vector fisher;
    Vector anchor;
};

/// Importance bookkeeping for EWC and SI.
struct ImportanceState {
    std::vector<EwcAnchor> ewc;       // one per completed task
    Vector omega_running;             // SI, reset every task
    Vector omega_consolidated;        // SI, accumulated over tasks
    Vector theta_at_task_start;       // SI
    Vector si_anchor;                 // SI, parameters at the end of the previous task
};

/// Mean of squared gradients.
inline Vector fisher_from_gradients(std::span<const Vector> grads) {
    if (grads.empty())
        throw StateError("fisher: no gradients");
    Vector f = Vector::Zero(grads.front().size());
    for (const Vector& g : grads)
        f.array() += g.array().square();
    return f / static_cast<double>(grads.size());
}

/// Empirical diagonal Fisher with labels sampled from the model's own softmax over
/// `class_set`. Uses min(n_fisher, rows) rows chosen by `rng`.
template <class Rng>
Vector ewc_fisher(const Network& net, const Matrix& features, const std::vector<int>& class_set, int n_fisher,
                  Rng& rng) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (n == 0)
        throw StateError("fisher: empty task data");
    const std::size_t k = std::min(n, static_cast<std::size_t>(std::max(1, n_fisher)));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i)
        idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(k);

    Vector sum = Vector::Zero(net.parameter_count());
    LossSpec spec;
    spec.cross_entropy = CrossEntropyTerm{1.0, {class_set}, {}};
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (std::size_t i : idx) {
        Batch b;
        b.inputs = features.row(static_cast<Eigen::Index>(i));
        const RowVector logits = forward(net, b.inputs).row(0);
        RowVector sub(static_cast<Eigen::Index>(class_set.size()));
        for (std::size_t c = 0; c < class_set.size(); ++c)
            sub[static_cast<Eigen::Index>(c)] = logits[class_set[c]];
        const RowVector p = softmax(sub);
        const double u = uni(rng);
        double acc = 0;
        int pick = class_set.back();
        for (std::size_t c = 0; c < class_set.size(); ++c) {
            acc += p[static_cast<Eigen::Index>(c)];
            if (u < acc) {
                pick = class_set[c];
                break;
            }
        }
        b.labels = {pick};
        sum.array() += backward(net, b, spec).grads.array().square();
    }
    return sum / static_cast<double>(k);
}

/// (lambda/2) * sum over anchors of sum_k F_k (theta_k - anchor_k)^2
inline double ewc_penalty(const Vector& params, const std::vector<EwcAnchor>& anchors, double lambda) {
    double total = 0;
    for (const auto& a : anchors)
        total += (a.fisher.array() * (params - a.anchor).array().square()).sum();
    return 0.5 * lambda * total;
}

inline std::vector<QuadraticPenalty> ewc_penalty_terms(const std::vector<EwcAnchor>& anchors, double lambda) {
    std::vector<QuadraticPenalty> terms;
    if (lambda == 0.0)
        return terms;
    for (const auto& a : anchors)
        terms.push_back({0.5 * lambda, a.fisher, a.anchor});
    return terms;
}

/// Scales importances so the summed curvature sum_t weight_t*imp_t,k never exceeds
/// 1/(2 lr): one SGD step on the penalty then moves a parameter at most onto the
/// importance-weighted anchor instead of overshooting it. Plain SGD with large lambda
/// otherwise diverges.
inline std::vector<QuadraticPenalty> cap_penalty_curvature(std::vector<QuadraticPenalty> terms, double lr) {
    if (terms.empty())
        return terms;
    const double cap = 0.5 / lr;
    Vector total = Vector::Zero(terms.front().importance.size());
    for (const auto& t : terms)
        total += t.weight * t.importance;
    for (Eigen::Index k = 0; k < total.size(); ++k) {
        if (total[k] <= cap)
            continue;
        const double f = cap / total[k];
        for (auto& t : terms)
            t.importance[k] *= f;
    }
    return terms;
}

/// omega_k += -g_k * delta_theta_k
inline void si_accumulate(Vector& omega_running, const Vector& grads, const Vector& delta_theta) {
    if (omega_running.size() != grads.size() || grads.size() != delta_theta.size())
        throw StateError("si_accumulate: shape mismatch");
    omega_running.array() -= grads.array() * delta_theta.array();
}

/// Omega_k += max(omega_k, 0) / ((theta_now_k - theta_start_k)^2 + xi); resets the running
/// path integral and the task start snapshot.
inline void si_consolidate(Vector& omega_consolidated, Vector& omega_running, const Vector& theta_now,
                           Vector& theta_at_task_start, double xi) {
    if (!(xi > 0))
        throw ConfigError("SI damping xi must be positive");
    if (omega_consolidated.size() != theta_now.size() || omega_running.size() != theta_now.size() ||
        theta_at_task_start.size() != theta_now.size())
        throw StateError("si_consolidate: shape mismatch");
    const Vector delta = theta_now - theta_at_task_start;
    omega_consolidated.array() += omega_running.array().max(0.0) / (delta.array().square() + xi);
    omega_running.setZero();
    theta_at_task_start = theta_now;
}

inline double si_penalty(const Vector& params, const Vector& omega, const Vector& anchor, double lambda) {
    return lambda * (omega.array() * (params - anchor).array().square()).sum();
}

} // namespace clbench
